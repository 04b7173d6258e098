//! Mesh file I/O: OBJ (ASCII), PLY (ASCII and binary little-endian),
//! STL (ASCII and binary, load only).
//!
//! Loaders return raw geometry; welding and degenerate-triangle cleanup
//! happen in [`super::load_mesh_with`]. ASCII writers emit positions with 9
//! significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{MeshError, Provenance, TriangleMesh};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Obj,
    Ply,
    Stl,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveFormat {
    Obj,
    PlyAscii,
    PlyBinary,
}

impl Format {
    pub fn from_extension(path: &Path) -> Option<Format> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Some(Format::Obj),
            Some("ply") => Some(Format::Ply),
            Some("stl") => Some(Format::Stl),
            _ => None,
        }
    }
}

impl SaveFormat {
    /// Pick a writer from the output extension: `.obj` or `.ply` (binary).
    pub fn from_extension(path: &Path) -> Option<SaveFormat> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Some(SaveFormat::Obj),
            Some("ply") => Some(SaveFormat::PlyBinary),
            _ => None,
        }
    }
}

pub fn load(path: &Path, format: Format) -> Result<TriangleMesh, MeshError> {
    if !path.exists() {
        return Err(MeshError::FileNotFound(path.display().to_string()));
    }
    let format = match format {
        Format::Auto => Format::from_extension(path).ok_or_else(|| {
            MeshError::UnsupportedFormat(format!("cannot infer format of {}", path.display()))
        })?,
        f => f,
    };
    let mut mesh = match format {
        Format::Obj => load_obj(path),
        Format::Ply => load_ply(path),
        Format::Stl => load_stl(path),
        Format::Auto => unreachable!(),
    }?;
    mesh.provenance = Provenance {
        source: Some(path.display().to_string()),
        transform: None,
    };
    Ok(mesh)
}

pub fn save(mesh: &TriangleMesh, path: &Path, format: SaveFormat) -> Result<(), MeshError> {
    match format {
        SaveFormat::Obj => save_obj(mesh, path),
        SaveFormat::PlyAscii => save_ply(mesh, path, false),
        SaveFormat::PlyBinary => save_ply(mesh, path, true),
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn bin_err(path: &Path, offset: u64, msg: impl Into<String>) -> MeshError {
    MeshError::ParseBinary {
        path: path.display().to_string(),
        offset,
        msg: msg.into(),
    }
}

// ---------------------------------------------------------------------------
// OBJ
// ---------------------------------------------------------------------------

fn load_obj(path: &Path) -> Result<TriangleMesh, MeshError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut positions: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let w = words
                        .next()
                        .ok_or_else(|| parse_err(path, lineno, "vertex needs 3 coordinates"))?;
                    *c = w
                        .parse()
                        .map_err(|_| parse_err(path, lineno, format!("bad coordinate '{w}'")))?;
                }
                positions.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::with_capacity(4);
                for w in words {
                    let first = w.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(path, lineno, format!("bad face index '{w}'")))?;
                    let resolved = if i > 0 {
                        (i - 1) as usize
                    } else if i < 0 {
                        let back = positions.len() as i64 + i;
                        if back < 0 {
                            return Err(parse_err(path, lineno, "negative index out of range"));
                        }
                        back as usize
                    } else {
                        return Err(parse_err(path, lineno, "face index 0 is invalid"));
                    };
                    if resolved >= positions.len() {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("face index {} out of range", i),
                        ));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(parse_err(path, lineno, "face needs at least 3 indices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            // Comments, normals, texcoords, groups, materials: ignored.
            _ => {}
        }
    }
    TriangleMesh::new(positions, triangles)
}

fn save_obj(mesh: &TriangleMesh, path: &Path) -> Result<(), MeshError> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in &mesh.positions {
        writeln!(w, "v {:.8e} {:.8e} {:.8e}", p.x, p.y, p.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<PlyType> {
        Some(match s {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read_f64(self, bytes: &[u8]) -> f64 {
        match self {
            PlyType::I8 => bytes[0] as i8 as f64,
            PlyType::U8 => bytes[0] as f64,
            PlyType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum PlyProp {
    Scalar(PlyType, String),
    List(PlyType, PlyType, String),
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProp>,
}

fn load_ply(path: &Path) -> Result<TriangleMesh, MeshError> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;

    // Header is ASCII lines up to and including "end_header".
    let mut cursor = 0usize;
    let read_line = |data: &[u8], cursor: &mut usize| -> Option<String> {
        if *cursor >= data.len() {
            return None;
        }
        let start = *cursor;
        while *cursor < data.len() && data[*cursor] != b'\n' {
            *cursor += 1;
        }
        let mut end = *cursor;
        if end > start && data[end - 1] == b'\r' {
            end -= 1;
        }
        *cursor += 1; // skip newline
        Some(String::from_utf8_lossy(&data[start..end]).into_owned())
    };

    let magic = read_line(&data, &mut cursor).unwrap_or_default();
    if magic.trim() != "ply" {
        return Err(parse_err(path, 1, "missing 'ply' magic"));
    }
    let mut ascii = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut lineno = 1;
    loop {
        let line = read_line(&data, &mut cursor)
            .ok_or_else(|| parse_err(path, lineno, "unterminated header"))?;
        lineno += 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.first().copied() {
            Some("format") => match words.get(1).copied() {
                Some("ascii") => ascii = Some(true),
                Some("binary_little_endian") => ascii = Some(false),
                other => {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("unsupported format {:?}", other),
                    ))
                }
            },
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = words
                    .get(1)
                    .ok_or_else(|| parse_err(path, lineno, "element needs a name"))?;
                let count: usize = words
                    .get(2)
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| parse_err(path, lineno, "element needs a count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, lineno, "property before element"))?;
                if words.get(1).copied() == Some("list") {
                    let ct = PlyType::parse(words.get(2).copied().unwrap_or(""))
                        .ok_or_else(|| parse_err(path, lineno, "bad list count type"))?;
                    let it = PlyType::parse(words.get(3).copied().unwrap_or(""))
                        .ok_or_else(|| parse_err(path, lineno, "bad list item type"))?;
                    let name = words
                        .get(4)
                        .ok_or_else(|| parse_err(path, lineno, "list property needs a name"))?;
                    el.props.push(PlyProp::List(ct, it, name.to_string()));
                } else {
                    let ty = PlyType::parse(words.get(1).copied().unwrap_or(""))
                        .ok_or_else(|| parse_err(path, lineno, "bad property type"))?;
                    let name = words
                        .get(2)
                        .ok_or_else(|| parse_err(path, lineno, "property needs a name"))?;
                    el.props.push(PlyProp::Scalar(ty, name.to_string()));
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(parse_err(path, lineno, format!("unknown keyword '{other}'")))
            }
            None => {}
        }
    }
    let ascii = ascii.ok_or_else(|| parse_err(path, lineno, "missing format line"))?;

    let mut positions: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    if ascii {
        let body = String::from_utf8_lossy(&data[cursor..]);
        let mut lines = body.lines();
        for el in &elements {
            for _ in 0..el.count {
                let line = lines
                    .next()
                    .ok_or_else(|| parse_err(path, lineno, "unexpected end of data"))?;
                lineno += 1;
                let mut words = line.split_whitespace();
                let mut xyz = [f64::NAN; 3];
                let mut face: Vec<u32> = Vec::new();
                for prop in &el.props {
                    match prop {
                        PlyProp::Scalar(_, name) => {
                            let w = words
                                .next()
                                .ok_or_else(|| parse_err(path, lineno, "missing property"))?;
                            if el.name == "vertex" {
                                let v: f64 = w.parse().map_err(|_| {
                                    parse_err(path, lineno, format!("bad number '{w}'"))
                                })?;
                                match name.as_str() {
                                    "x" => xyz[0] = v,
                                    "y" => xyz[1] = v,
                                    "z" => xyz[2] = v,
                                    _ => {}
                                }
                            }
                        }
                        PlyProp::List(_, _, name) => {
                            let n: usize = words
                                .next()
                                .and_then(|w| w.parse().ok())
                                .ok_or_else(|| parse_err(path, lineno, "bad list count"))?;
                            let mut items = Vec::with_capacity(n);
                            for _ in 0..n {
                                let w = words
                                    .next()
                                    .ok_or_else(|| parse_err(path, lineno, "short list"))?;
                                items.push(w.parse::<i64>().map_err(|_| {
                                    parse_err(path, lineno, format!("bad index '{w}'"))
                                })?);
                            }
                            if el.name == "face"
                                && (name == "vertex_indices" || name == "vertex_index")
                            {
                                face = items.iter().map(|&i| i as u32).collect();
                            }
                        }
                    }
                }
                if el.name == "vertex" {
                    if xyz.iter().any(|v| v.is_nan()) {
                        return Err(parse_err(path, lineno, "vertex missing x/y/z"));
                    }
                    positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
                if el.name == "face" && face.len() >= 3 {
                    for k in 1..face.len() - 1 {
                        triangles.push([face[0], face[k], face[k + 1]]);
                    }
                }
            }
        }
    } else {
        let mut off = cursor;
        for el in &elements {
            for _ in 0..el.count {
                let mut xyz = [f64::NAN; 3];
                let mut face: Vec<u32> = Vec::new();
                for prop in &el.props {
                    match prop {
                        PlyProp::Scalar(ty, name) => {
                            let sz = ty.size();
                            if off + sz > data.len() {
                                return Err(bin_err(path, off as u64, "truncated element data"));
                            }
                            if el.name == "vertex" {
                                let v = ty.read_f64(&data[off..]);
                                match name.as_str() {
                                    "x" => xyz[0] = v,
                                    "y" => xyz[1] = v,
                                    "z" => xyz[2] = v,
                                    _ => {}
                                }
                            }
                            off += sz;
                        }
                        PlyProp::List(ct, it, name) => {
                            let csz = ct.size();
                            if off + csz > data.len() {
                                return Err(bin_err(path, off as u64, "truncated list count"));
                            }
                            let n = ct.read_f64(&data[off..]) as usize;
                            off += csz;
                            let isz = it.size();
                            if off + n * isz > data.len() {
                                return Err(bin_err(path, off as u64, "truncated list items"));
                            }
                            if el.name == "face"
                                && (name == "vertex_indices" || name == "vertex_index")
                            {
                                face = (0..n)
                                    .map(|k| it.read_f64(&data[off + k * isz..]) as u32)
                                    .collect();
                            }
                            off += n * isz;
                        }
                    }
                }
                if el.name == "vertex" {
                    if xyz.iter().any(|v| v.is_nan()) {
                        return Err(bin_err(path, off as u64, "vertex missing x/y/z"));
                    }
                    positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
                if el.name == "face" && face.len() >= 3 {
                    for k in 1..face.len() - 1 {
                        triangles.push([face[0], face[k], face[k + 1]]);
                    }
                }
            }
        }
    }
    TriangleMesh::new(positions, triangles)
}

fn save_ply(mesh: &TriangleMesh, path: &Path, binary: bool) -> Result<(), MeshError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    if binary {
        writeln!(w, "format binary_little_endian 1.0")?;
    } else {
        writeln!(w, "format ascii 1.0")?;
    }
    writeln!(w, "element vertex {}", mesh.positions.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "element face {}", mesh.triangles.len())?;
    writeln!(w, "property list uchar uint vertex_indices")?;
    writeln!(w, "end_header")?;
    if binary {
        for p in &mesh.positions {
            for c in [p.x, p.y, p.z] {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
        }
        for t in &mesh.triangles {
            w.write_all(&[3u8])?;
            for &i in t {
                w.write_all(&i.to_le_bytes())?;
            }
        }
    } else {
        for p in &mesh.positions {
            writeln!(w, "{:.8e} {:.8e} {:.8e}", p.x, p.y, p.z)?;
        }
        for t in &mesh.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// STL (load only)
// ---------------------------------------------------------------------------

fn load_stl(path: &Path) -> Result<TriangleMesh, MeshError> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;

    // Binary STL: 80-byte header, u32 triangle count, 50 bytes per triangle.
    // "solid" prefixes are legal in binary headers, so decide by sizes.
    let looks_binary = data.len() >= 84 && {
        let n = u32::from_le_bytes(data[80..84].try_into().unwrap()) as usize;
        data.len() == 84 + n * 50
    };
    if looks_binary {
        return load_stl_binary(path, &data);
    }
    if data.starts_with(b"solid") {
        return load_stl_ascii(path, &data);
    }
    load_stl_binary(path, &data)
}

fn load_stl_binary(path: &Path, data: &[u8]) -> Result<TriangleMesh, MeshError> {
    if data.len() < 84 {
        return Err(bin_err(path, data.len() as u64, "binary STL shorter than header"));
    }
    let n = u32::from_le_bytes(data[80..84].try_into().unwrap()) as usize;
    if data.len() < 84 + n * 50 {
        return Err(bin_err(path, data.len() as u64, "truncated binary STL"));
    }
    let mut positions = Vec::with_capacity(n * 3);
    let mut triangles = Vec::with_capacity(n);
    for t in 0..n {
        let rec = &data[84 + t * 50..84 + t * 50 + 50];
        // Skip the 12-byte normal; read three vertices.
        for v in 0..3 {
            let at = 12 + v * 12;
            let x = f32::from_le_bytes(rec[at..at + 4].try_into().unwrap()) as f64;
            let y = f32::from_le_bytes(rec[at + 4..at + 8].try_into().unwrap()) as f64;
            let z = f32::from_le_bytes(rec[at + 8..at + 12].try_into().unwrap()) as f64;
            positions.push(Vec3::new(x, y, z));
        }
        let base = (t * 3) as u32;
        triangles.push([base, base + 1, base + 2]);
    }
    TriangleMesh::new(positions, triangles)
}

fn load_stl_ascii(path: &Path, data: &[u8]) -> Result<TriangleMesh, MeshError> {
    let text = String::from_utf8_lossy(data);
    let mut positions: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut current: Vec<Vec3> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("vertex") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let w = words
                        .next()
                        .ok_or_else(|| parse_err(path, lineno, "vertex needs 3 coordinates"))?;
                    *c = w
                        .parse()
                        .map_err(|_| parse_err(path, lineno, format!("bad coordinate '{w}'")))?;
                }
                current.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("endfacet") => {
                if current.len() != 3 {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("facet has {} vertices, expected 3", current.len()),
                    ));
                }
                let base = positions.len() as u32;
                positions.extend(current.drain(..));
                triangles.push([base, base + 1, base + 2]);
            }
            _ => {}
        }
    }
    TriangleMesh::new(positions, triangles)
}
