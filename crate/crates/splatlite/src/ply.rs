//! Binary little-endian PLY persistence in the splatting ecosystem's vertex
//! layout: position, zero normals, DC then higher-order SH (channel-major),
//! opacity logit, log scales, quaternion as (w, x, y, z). All fields f32.

use glam::{DQuat, DVec3};

use crate::error::{Error, Result};
use crate::sh;
use crate::splat::{GaussianSplat, SplatModel};

fn property_names(degree: usize) -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rest = 3 * (sh::coeff_count(degree) - 1);
    for i in 0..rest {
        names.push(format!("f_rest_{i}"));
    }
    names.push("opacity".into());
    for i in 0..3 {
        names.push(format!("scale_{i}"));
    }
    for i in 0..4 {
        names.push(format!("rot_{i}"));
    }
    names
}

pub fn save_ply(model: &SplatModel) -> Vec<u8> {
    let names = property_names(model.sh_degree);
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", model.len()));
    for name in &names {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");

    let m = model.coeffs_per_channel();
    let mut out = header.into_bytes();
    out.reserve(model.len() * names.len() * 4);
    let push = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for splat in &model.splats {
        push(&mut out, splat.position.x);
        push(&mut out, splat.position.y);
        push(&mut out, splat.position.z);
        for _ in 0..3 {
            push(&mut out, 0.0); // normals, zero-filled
        }
        for ch in 0..3 {
            push(&mut out, splat.sh_coeffs[ch * m]);
        }
        for ch in 0..3 {
            for k in 1..m {
                push(&mut out, splat.sh_coeffs[ch * m + k]);
            }
        }
        push(&mut out, splat.opacity_logit);
        push(&mut out, splat.log_scales.x);
        push(&mut out, splat.log_scales.y);
        push(&mut out, splat.log_scales.z);
        push(&mut out, splat.rotation.w);
        push(&mut out, splat.rotation.x);
        push(&mut out, splat.rotation.y);
        push(&mut out, splat.rotation.z);
    }
    out
}

pub fn load_ply(bytes: &[u8]) -> Result<SplatModel> {
    let header_end = find_header_end(bytes)?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::Ply("header is not valid utf-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(Error::Ply("missing ply magic".into()));
    }
    if lines.next() != Some("format binary_little_endian 1.0") {
        return Err(Error::Ply("expected format binary_little_endian 1.0".into()));
    }
    let mut vertex_count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    for line in lines {
        let line = line.trim_end();
        if line == "end_header" {
            break;
        }
        if line.starts_with("comment") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("element ") {
            let mut parts = rest.split_whitespace();
            let name = parts.next().unwrap_or("");
            let count = parts
                .next()
                .and_then(|c| c.parse::<usize>().ok())
                .ok_or_else(|| Error::Ply(format!("bad element line: {line}")))?;
            if name != "vertex" {
                return Err(Error::Ply(format!("unsupported element: {name}")));
            }
            vertex_count = Some(count);
            continue;
        }
        if let Some(rest) = line.strip_prefix("property ") {
            let mut parts = rest.split_whitespace();
            let ty = parts.next().unwrap_or("");
            let name = parts
                .next()
                .ok_or_else(|| Error::Ply(format!("bad property line: {line}")))?;
            if ty != "float" {
                return Err(Error::Ply(format!(
                    "property {name} has type {ty}, expected float"
                )));
            }
            props.push(name.to_string());
            continue;
        }
        return Err(Error::Ply(format!("unrecognized header line: {line}")));
    }
    let n = vertex_count.ok_or_else(|| Error::Ply("missing vertex element".into()))?;

    // infer the degree from the f_rest count, then demand the exact layout
    let rest_count = props.iter().filter(|p| p.starts_with("f_rest_")).count();
    let degree = (0..=sh::MAX_DEGREE)
        .find(|&d| 3 * (sh::coeff_count(d) - 1) == rest_count)
        .ok_or_else(|| {
            Error::Ply(format!(
                "{rest_count} f_rest properties do not correspond to any SH degree 0..=3"
            ))
        })?;
    let expected = property_names(degree);
    if props != expected {
        let missing: Vec<&String> = expected.iter().filter(|e| !props.contains(e)).collect();
        if let Some(first) = missing.first() {
            return Err(Error::Ply(format!("missing property {first}")));
        }
        let extra: Vec<&String> = props.iter().filter(|p| !expected.contains(p)).collect();
        if let Some(first) = extra.first() {
            return Err(Error::Ply(format!("unexpected property {first}")));
        }
        return Err(Error::Ply("properties out of order".into()));
    }

    let payload = &bytes[header_end..];
    let stride = expected.len() * 4;
    let need = n * stride;
    if payload.len() < need {
        return Err(Error::Ply(format!(
            "payload truncated: need {need} bytes, have {}",
            payload.len()
        )));
    }
    if payload.len() > need {
        return Err(Error::Ply(format!(
            "trailing data: {} extra bytes after {n} vertices",
            payload.len() - need
        )));
    }

    let m = sh::coeff_count(degree);
    let mut splats = Vec::with_capacity(n);
    for v in 0..n {
        let row = &payload[v * stride..(v + 1) * stride];
        let f = |i: usize| -> f64 {
            f32::from_le_bytes([row[i * 4], row[i * 4 + 1], row[i * 4 + 2], row[i * 4 + 3]])
                as f64
        };
        let position = DVec3::new(f(0), f(1), f(2));
        // normals at 3..6 are ignored
        let mut sh_coeffs = vec![0.0f64; 3 * m];
        for ch in 0..3 {
            sh_coeffs[ch * m] = f(6 + ch);
        }
        for ch in 0..3 {
            for k in 1..m {
                sh_coeffs[ch * m + k] = f(9 + ch * (m - 1) + (k - 1));
            }
        }
        let base = 9 + 3 * (m - 1);
        let opacity_logit = f(base);
        let log_scales = DVec3::new(f(base + 1), f(base + 2), f(base + 3));
        let rotation = DQuat::from_xyzw(f(base + 5), f(base + 6), f(base + 7), f(base + 4));
        splats.push(GaussianSplat {
            position,
            rotation,
            log_scales,
            opacity_logit,
            sh_coeffs,
        });
    }
    Ok(SplatModel::new(splats, degree))
}

fn find_header_end(bytes: &[u8]) -> Result<usize> {
    let needle = b"end_header\n";
    bytes
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + needle.len())
        .ok_or_else(|| Error::Ply("missing end_header".into()))
}
