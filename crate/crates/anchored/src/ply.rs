//! Gaussian scenes as PLY files in the common splatting layout: position,
//! DC colour coefficient, logit opacity, log scale and a `(w, x, y, z)`
//! quaternion per vertex. Binary little-endian on write; ASCII is also read.

use std::path::Path;

use anchored_core::gaussian::primitive::logit;
use anchored_core::gaussian::{GaussianPrimitive, GaussianScene};

use crate::error::{Error, Result};

/// Zeroth-order spherical harmonic constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

const FIELDS: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
    "rot_3",
];

fn to_fields(g: &GaussianPrimitive) -> [f64; 14] {
    let c = g.color().map(|c| (c - 0.5) / SH_C0);
    [
        g.position[0],
        g.position[1],
        g.position[2],
        c[0],
        c[1],
        c[2],
        g.opacity_logit,
        g.log_scale[0],
        g.log_scale[1],
        g.log_scale[2],
        g.rotation[0],
        g.rotation[1],
        g.rotation[2],
        g.rotation[3],
    ]
}

fn from_fields(f: &[f64; 14]) -> GaussianPrimitive {
    let color = [f[3], f[4], f[5]].map(|v| logit(0.5 + SH_C0 * v));
    GaussianPrimitive {
        position: [f[0], f[1], f[2]],
        rotation: [f[10], f[11], f[12], f[13]],
        log_scale: [f[7], f[8], f[9]],
        opacity_logit: f[6],
        color_raw: color,
        origin: None,
    }
}

pub fn encode(scene: &GaussianScene) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", scene.len()).as_bytes());
    for f in FIELDS {
        out.extend_from_slice(format!("property float {f}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for g in scene.primitives() {
        for v in to_fields(g) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    ascii: bool,
    count: usize,
    props: Vec<(String, Scalar)>,
    body_start: usize,
    /// 1-based line number of the first body line (ASCII only).
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    let mut pos = 0;
    let mut line_no = 0;
    let next_line = |pos: &mut usize| -> Option<String> {
        let rest = &bytes[*pos..];
        let end = rest.iter().position(|b| *b == b'\n')?;
        *pos += end + 1;
        Some(String::from_utf8_lossy(&rest[..end]).trim_end_matches('\r').to_string())
    };
    let mut format = None;
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let line = next_line(&mut pos).ok_or_else(|| format!("line {}: header ends before end_header", line_no + 1))?;
        line_no += 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        let err = |m: &str| format!("line {line_no}: {m}");
        match words.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(err("missing 'ply' magic")),
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => true,
                    "binary_little_endian" => false,
                    other => return Err(err(&format!("unsupported format {other}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(err("duplicate vertex element"));
                }
                count = Some(n.parse::<usize>().map_err(|_| err(&format!("bad vertex count {n:?}")))?);
            }
            ["element", name, _] => return Err(err(&format!("unsupported element {name:?}"))),
            ["property", "list", ..] => return Err(err("list properties are not supported")),
            ["property", ty, name] => {
                if count.is_none() {
                    return Err(err("property before element"));
                }
                let s = Scalar::parse(ty).ok_or_else(|| err(&format!("unknown property type {ty:?}")))?;
                props.push((name.to_string(), s));
            }
            ["end_header"] => break,
            _ => return Err(err(&format!("unexpected header line {line:?}"))),
        }
    }
    let ascii = format.ok_or("header has no format line")?;
    let count = count.ok_or("header has no vertex element")?;
    Ok(Header { ascii, count, props, body_start: pos, body_line: line_no + 1 })
}

/// Parses a scene; errors name the header line, the ASCII body line or the
/// binary byte offset at fault.
pub fn decode(bytes: &[u8]) -> std::result::Result<GaussianScene, String> {
    let h = parse_header(bytes)?;
    let mut index = [usize::MAX; 14];
    for (k, name) in FIELDS.iter().enumerate() {
        index[k] = h
            .props
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| format!("header is missing property {name:?}"))?;
    }
    let mut values = vec![0.0; h.props.len()];
    let mut prims = Vec::new();
    let body = &bytes[h.body_start..];
    let mut fields = [0.0; 14];
    if h.ascii {
        let text = std::str::from_utf8(body).map_err(|e| format!("line {}: body is not UTF-8: {e}", h.body_line))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        for v in 0..h.count {
            let (i, line) = lines.next().ok_or_else(|| format!("vertex {v}: file ends after {v} of {} vertices", h.count))?;
            let line_no = h.body_line + i;
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() != h.props.len() {
                return Err(format!("line {line_no}: expected {} values, found {}", h.props.len(), words.len()));
            }
            for (slot, w) in values.iter_mut().zip(&words) {
                *slot = w.parse().map_err(|_| format!("line {line_no}: bad number {w:?}"))?;
            }
            for k in 0..14 {
                fields[k] = values[index[k]];
            }
            prims.push(from_fields(&fields));
        }
    } else {
        let stride: usize = h.props.iter().map(|(_, s)| s.size()).sum();
        let need = stride * h.count;
        if body.len() < need {
            let offset = h.body_start + body.len() / stride * stride;
            return Err(format!("byte offset {offset}: truncated vertex data ({} of {need} bytes)", body.len()));
        }
        for v in 0..h.count {
            let mut at = v * stride;
            for (slot, (_, s)) in values.iter_mut().zip(&h.props) {
                *slot = s.read_le(&body[at..]);
                at += s.size();
            }
            for k in 0..14 {
                fields[k] = values[index[k]];
            }
            if fields.iter().any(|x| !x.is_finite()) {
                return Err(format!("byte offset {}: non-finite value in vertex {v}", h.body_start + v * stride));
            }
            prims.push(from_fields(&fields));
        }
    }
    Ok(GaussianScene::from_primitives(prims))
}

pub fn write(path: &Path, scene: &GaussianScene) -> Result<()> {
    std::fs::write(path, encode(scene)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<GaussianScene> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> GaussianScene {
        GaussianScene::from_primitives(vec![
            GaussianPrimitive::isotropic([0.0, 1.0, 2.0], 0.1, 0.8, [0.2, 0.4, 0.6], None),
            GaussianPrimitive::from_decoded([-1.0, 0.5, 1.5], [0.9, 0.1, 0.0, 0.2], [0.05, 0.1, 0.2], 0.3, [0.9, 0.1, 0.5], None),
        ])
    }

    #[test]
    fn binary_round_trip_within_f32() {
        let s = scene();
        let back = decode(&encode(&s)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in s.primitives().iter().zip(back.primitives()) {
            for (x, y) in a.position.iter().zip(b.position) {
                assert!((x - y).abs() < 1e-6);
            }
            assert!((a.opacity() - b.opacity()).abs() < 1e-6);
            for (x, y) in a.color().iter().zip(b.color()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn encoding_is_stable() {
        assert_eq!(encode(&scene()), encode(&scene()));
        let empty = encode(&GaussianScene::new());
        assert!(String::from_utf8_lossy(&empty).contains("element vertex 0\n"));
        assert_eq!(decode(&empty).unwrap().len(), 0);
    }

    #[test]
    fn ascii_with_extra_property_and_reordering() {
        let mut text = String::from("ply\nformat ascii 1.0\nelement vertex 1\nproperty uchar flag\n");
        for f in FIELDS.iter().rev() {
            text += &format!("property double {f}\n");
        }
        // fields are reversed: rot_3 rot_2 rot_1 rot_0 first
        text += "end_header\n7 0 0 0 1 -2 -2 -2 0 0 0 0 3 2 1\n";
        let s = decode(text.as_bytes()).unwrap();
        let g = s.primitives()[0];
        assert_eq!(g.position, [1.0, 2.0, 3.0]);
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.log_scale, [-2.0; 3]);
        assert!((g.opacity() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_locations() {
        assert!(decode(b"plx\n").unwrap_err().starts_with("line 1"));
        let mut text = String::from("ply\nformat ascii 1.0\nelement vertex 1\n");
        for f in FIELDS {
            text += &format!("property float {f}\n");
        }
        text += "end_header\n1 2 3\n";
        assert_eq!(decode(text.as_bytes()).unwrap_err(), "line 19: expected 14 values, found 3");
        let mut bin = encode(&scene());
        bin.truncate(bin.len() - 10);
        let e = decode(&bin).unwrap_err();
        assert!(e.starts_with("byte offset"), "{e}");
        assert!(decode(b"ply\nformat ascii 1.0\nelement face 2\nend_header\n").unwrap_err().starts_with("line 3"));
    }
}
