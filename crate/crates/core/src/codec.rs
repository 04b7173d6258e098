//! Bit-exact serialization of voxel records (`.tpmc`).
//!
//! No connectivity is stored: the dual-marching-cubes structure *is* the
//! compression. A stream holds, per surface voxel in Morton order, its
//! integer coordinates (3 x 10 bits), the corner-occupancy byte, one 3 x 10
//! bit quantized in-cell offset per dual vertex (the count is implied by the
//! occupancy byte via the case table), and 3 triangulation bits (one per
//! owned grid edge). Reassembly regenerates quads from occupancy and grid
//! adjacency alone.
//!
//! Layout (all little-endian; payload bits are LSB-first within each byte):
//!
//! ```text
//! magic  "TPMC"                      4 bytes
//! version u8 = 1                     1
//! resolution u16                     2
//! record_count u32                   4
//! transform: scale, tx, ty, tz f64  32
//! payload bitstream, zero-padded     ceil(bits / 8)
//! crc32 (IEEE) of payload bytes      4
//! ```
//!
//! `encode(decode(b)) == b` for every valid stream, and `decode(encode(m))`
//! reproduces `m`'s records exactly after quantization (offsets land on
//! bucket centers `(q + 0.5) / 1024`, so a second cycle is the identity).

use crate::extract::{assemble_records, case_table, DmcMesh, DmcRecord, ExtractError, TriBits};
use crate::mesh::NormalizationTransform;
use crate::Vec3;

pub const MAGIC: [u8; 4] = *b"TPMC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 43;
const OFFSET_BITS: u32 = 10;
const OFFSET_BUCKETS: u32 = 1 << OFFSET_BITS;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("resolution {0} exceeds the 10-bit coordinate budget (max 1024)")]
    ResolutionTooHigh(u32),
    #[error("records not in canonical Morton order")]
    NonCanonicalOrder,
    #[error("record at {coords:?} invalid: {msg}")]
    InvalidRecord { coords: [u16; 3], msg: String },
    #[error("bad magic (not a TPMC stream)")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("stream truncated")]
    TruncatedStream,
    #[error("nonzero padding bits at end of payload")]
    InvalidPadding,
    #[error("trailing data after checksum")]
    TrailingData,
    #[error(transparent)]
    Reassemble(#[from] ExtractError),
}

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320).
fn crc32(data: &[u8]) -> u32 {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, e) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *e = c;
        }
        t
    });
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

struct BitWriter {
    bytes: Vec<u8>,
    bit: u32,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            bit: 0,
        }
    }

    /// Append the low `n` bits of `value`, LSB first.
    fn write(&mut self, value: u32, n: u32) {
        debug_assert!(n == 32 || value < (1u32 << n));
        for k in 0..n {
            if self.bit == 0 {
                self.bytes.push(0);
            }
            if value >> k & 1 != 0 {
                *self.bytes.last_mut().unwrap() |= 1 << self.bit;
            }
            self.bit = (self.bit + 1) % 8;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    fn read(&mut self, n: u32) -> Option<u32> {
        if self.pos + n as usize > self.bytes.len() * 8 {
            return None;
        }
        let mut v = 0u32;
        for k in 0..n as usize {
            let bit = self.bytes[(self.pos + k) / 8] >> ((self.pos + k) % 8) & 1;
            v |= (bit as u32) << k;
        }
        self.pos += n as usize;
        Some(v)
    }

    fn bits_left(&self) -> usize {
        self.bytes.len() * 8 - self.pos
    }

    /// All remaining bits (the padding) must be zero.
    fn padding_is_zero(&self) -> bool {
        (self.pos..self.bytes.len() * 8).all(|p| self.bytes[p / 8] >> (p % 8) & 1 == 0)
    }
}

/// Serialize a DMC mesh's records. Deterministic; requires canonical order.
pub fn encode(mesh: &DmcMesh) -> Result<Vec<u8>, CodecError> {
    encode_records(mesh.resolution, &mesh.transform, &mesh.records)
}

pub fn encode_records(
    resolution: u32,
    transform: &NormalizationTransform,
    records: &[DmcRecord],
) -> Result<Vec<u8>, CodecError> {
    if resolution > 1024 {
        return Err(CodecError::ResolutionTooHigh(resolution));
    }
    let table = case_table();
    let mut prev = None;
    for rec in records {
        let key = rec.morton();
        if prev.map_or(false, |p| p >= key) {
            return Err(CodecError::NonCanonicalOrder);
        }
        prev = Some(key);
        if rec.coords.iter().any(|&c| c as u32 >= resolution) {
            return Err(CodecError::InvalidRecord {
                coords: rec.coords,
                msg: format!("coordinates out of range for resolution {resolution}"),
            });
        }
        if rec.vertex_count != table.vertex_count[rec.occupancy as usize] {
            return Err(CodecError::InvalidRecord {
                coords: rec.coords,
                msg: "vertex count disagrees with occupancy byte".into(),
            });
        }
        if rec.tri_bits > 0b111 {
            return Err(CodecError::InvalidRecord {
                coords: rec.coords,
                msg: "triangulation bits out of range".into(),
            });
        }
    }

    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * 9 + 4);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(resolution as u16).to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    out.extend_from_slice(&transform.scale.to_le_bytes());
    for c in [
        transform.translation.x,
        transform.translation.y,
        transform.translation.z,
    ] {
        out.extend_from_slice(&c.to_le_bytes());
    }
    debug_assert_eq!(out.len(), HEADER_LEN);

    let mut w = BitWriter::new();
    for rec in records {
        for &c in &rec.coords {
            w.write(c as u32, 10);
        }
        w.write(rec.occupancy as u32, 8);
        for s in 0..rec.vertex_count as usize {
            for a in 0..3 {
                w.write(quantize_offset(rec.offsets[s][a]), OFFSET_BITS);
            }
        }
        w.write(rec.tri_bits as u32, 3);
    }
    let payload = w.finish();
    let checksum = crc32(&payload);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&checksum.to_le_bytes());
    Ok(out)
}

#[inline]
fn quantize_offset(o: f32) -> u32 {
    ((o as f64 * OFFSET_BUCKETS as f64).floor() as i64).clamp(0, OFFSET_BUCKETS as i64 - 1) as u32
}

#[inline]
fn dequantize_offset(q: u32) -> f32 {
    ((q as f64 + 0.5) / OFFSET_BUCKETS as f64) as f32
}

/// A decoded stream: records only; call [`reassemble`] for the mesh.
pub struct DecodedStream {
    pub resolution: u32,
    pub transform: NormalizationTransform,
    pub records: Vec<DmcRecord>,
}

pub fn decode(bytes: &[u8]) -> Result<DecodedStream, CodecError> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(CodecError::TruncatedStream);
    }
    if bytes[0..4] != MAGIC {
        return Err(CodecError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(CodecError::BadVersion(bytes[4]));
    }
    let resolution = u16::from_le_bytes(bytes[5..7].try_into().unwrap()) as u32;
    let record_count = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let mut floats = [0.0f64; 4];
    for (i, f) in floats.iter_mut().enumerate() {
        *f = f64::from_le_bytes(bytes[11 + 8 * i..19 + 8 * i].try_into().unwrap());
    }
    let transform = NormalizationTransform {
        scale: floats[0],
        translation: Vec3::new(floats[1], floats[2], floats[3]),
    };
    if resolution > 1024 {
        return Err(CodecError::ResolutionTooHigh(resolution));
    }

    let payload = &bytes[HEADER_LEN..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32(payload);
    if stored != computed {
        return Err(CodecError::ChecksumMismatch { stored, computed });
    }

    let table = case_table();
    let mut r = BitReader::new(payload);
    let mut records = Vec::with_capacity(record_count);
    let mut prev = None;
    for _ in 0..record_count {
        let mut coords = [0u16; 3];
        for c in &mut coords {
            *c = r.read(10).ok_or(CodecError::TruncatedStream)? as u16;
        }
        let occupancy = r.read(8).ok_or(CodecError::TruncatedStream)? as u8;
        let vertex_count = table.vertex_count[occupancy as usize];
        let mut offsets = [[0.0f32; 3]; 4];
        for s in 0..vertex_count as usize {
            for a in 0..3 {
                let q = r.read(OFFSET_BITS).ok_or(CodecError::TruncatedStream)?;
                offsets[s][a] = dequantize_offset(q);
            }
        }
        let tri_bits = r.read(3).ok_or(CodecError::TruncatedStream)? as u8;
        let rec = DmcRecord {
            coords,
            occupancy,
            tri_bits,
            vertex_count,
            offsets,
        };
        let key = rec.morton();
        if prev.map_or(false, |p| p >= key) {
            return Err(CodecError::NonCanonicalOrder);
        }
        if rec.coords.iter().any(|&c| c as u32 >= resolution) {
            return Err(CodecError::InvalidRecord {
                coords: rec.coords,
                msg: format!("coordinates out of range for resolution {resolution}"),
            });
        }
        prev = Some(key);
        records.push(rec);
    }
    if r.bits_left() >= 8 {
        return Err(CodecError::TrailingData);
    }
    if !r.padding_is_zero() {
        return Err(CodecError::InvalidPadding);
    }
    Ok(DecodedStream {
        resolution,
        transform,
        records,
    })
}

/// Rebuild the triangle mesh from records: dual vertices at dequantized
/// offsets, quad connectivity regenerated from occupancy and grid
/// adjacency, triangulation following the stored bits.
pub fn reassemble(stream: DecodedStream) -> Result<DmcMesh, CodecError> {
    let DecodedStream {
        resolution,
        transform,
        mut records,
    } = stream;
    let (assembled, quad_count) =
        assemble_records(&mut records, resolution, &transform, TriBits::Stored)?;
    Ok(DmcMesh {
        resolution,
        records,
        transform,
        assembled,
        quad_count,
    })
}

/// Decode and reassemble in one step.
pub fn decode_mesh(bytes: &[u8]) -> Result<DmcMesh, CodecError> {
    reassemble(decode(bytes)?)
}

/// Size of the plain binary indexed-triangle serialization of a mesh
/// (3 x f32 per vertex, 3 x u32 per triangle): the comparison baseline for
/// compression ratios.
pub fn baseline_triangle_bytes(mesh: &crate::mesh::TriangleMesh) -> usize {
    mesh.positions.len() * 12 + mesh.triangles.len() * 12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{extract, ExtractConfig};
    use crate::field::{FieldMode, LinfField};
    use crate::fixtures;
    use crate::voxel::classify_corners;
    use proptest::prelude::*;

    fn sphere_dmc(r: u32) -> DmcMesh {
        let sphere = fixtures::icosphere(0.5, 3);
        let field = LinfField::build(&sphere, 1.5 * 2.0 / r as f64, FieldMode::Linf).unwrap();
        let (grid, _) = classify_corners(&sphere, &field, r).unwrap();
        extract(&grid, &field, &ExtractConfig::default()).unwrap()
    }

    #[test]
    fn header_and_single_corner_record_arithmetic() {
        // Single-occupied-corner mesh: 8 records, 1 vertex each:
        // payload bits = 8 * (30 + 8 + 30 + 3) = 568 = 71 bytes.
        let r = 32u32;
        let c = r / 2;
        let keys = vec![crate::morton::encode(c, c, c)];
        let margins = vec![0.01];
        let (grid, _) = crate::voxel::SparseCornerGrid::from_band(r, 0.01, keys, &margins, 0);
        let tiny = fixtures::tetrahedron(1e-4);
        let field = LinfField::build(&tiny, 0.01, FieldMode::Linf).unwrap();
        let dmc = extract(&grid, &field, &ExtractConfig::default()).unwrap();
        assert_eq!(dmc.records.len(), 8);
        let bytes = encode(&dmc).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 71 + 4);
        assert_eq!(&bytes[0..4], b"TPMC");
        assert_eq!(bytes[4], 1);
    }

    #[test]
    fn empty_stream_roundtrip() {
        let empty = encode_records(64, &NormalizationTransform::identity(), &[]).unwrap();
        assert_eq!(empty.len(), HEADER_LEN + 4);
        let back = decode(&empty).unwrap();
        assert!(back.records.is_empty());
        assert_eq!(back.resolution, 64);
        // Deterministic: encoding twice is byte-identical.
        let again = encode_records(64, &NormalizationTransform::identity(), &[]).unwrap();
        assert_eq!(empty, again);
    }

    #[test]
    fn roundtrip_is_fixed_point_after_quantization() {
        let dmc = sphere_dmc(64);
        let b1 = encode(&dmc).unwrap();
        let decoded = decode(&b1).unwrap();
        assert_eq!(decoded.records.len(), dmc.records.len());
        // Offsets move to bucket centers, at most half a bucket away.
        for (a, b) in dmc.records.iter().zip(&decoded.records) {
            assert_eq!(a.coords, b.coords);
            assert_eq!(a.occupancy, b.occupancy);
            assert_eq!(a.tri_bits, b.tri_bits);
            for s in 0..a.vertex_count as usize {
                for x in 0..3 {
                    let d = (a.offsets[s][x] - b.offsets[s][x]).abs();
                    assert!(d as f64 <= 0.5 / 1024.0 + 1e-12, "offset moved {d}");
                }
            }
        }
        // encode(decode(b)) == b, bit for bit.
        let reassembled = reassemble(decoded).unwrap();
        let b2 = encode(&reassembled).unwrap();
        assert_eq!(b1, b2);
        // And the cycle is idempotent from here on.
        let b3 = encode(&reassemble(decode(&b2).unwrap()).unwrap()).unwrap();
        assert_eq!(b2, b3);
    }

    #[test]
    fn reassembled_connectivity_is_identical() {
        let dmc = sphere_dmc(64);
        let bytes = encode(&dmc).unwrap();
        let back = decode_mesh(&bytes).unwrap();
        assert_eq!(back.assembled.triangles, dmc.assembled.triangles);
        assert_eq!(back.quad_count, dmc.quad_count);
        // Positions differ by at most half a quantization bucket per axis.
        let h = 2.0 / dmc.resolution as f64;
        for (p, q) in dmc.assembled.positions.iter().zip(&back.assembled.positions) {
            for a in 0..3 {
                assert!((p[a] - q[a]).abs() <= h / 2048.0 + 1e-12);
            }
        }
        let report = crate::mesh::check_watertight_manifold(&back.assembled);
        assert!(report.edge_manifold && report.closed && report.oriented);
    }

    #[test]
    fn corruption_is_detected() {
        let dmc = sphere_dmc(32);
        let bytes = encode(&dmc).unwrap();

        // Flip one payload bit.
        let mut bad = bytes.clone();
        bad[HEADER_LEN + 5] ^= 0x10;
        assert!(matches!(
            decode(&bad),
            Err(CodecError::ChecksumMismatch { .. })
        ));

        // Wrong magic.
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(CodecError::BadMagic)));

        // Wrong version.
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(CodecError::BadVersion(9))));

        // Record count implies more payload than present (the header is not
        // covered by the checksum, so parsing runs out of bits).
        let mut bad = bytes.clone();
        let count = u32::from_le_bytes(bad[7..11].try_into().unwrap());
        bad[7..11].copy_from_slice(&(count + 10).to_le_bytes());
        assert!(matches!(decode(&bad), Err(CodecError::TruncatedStream)));

        // Too short to even hold a header.
        assert!(matches!(
            decode(&bytes[..20]),
            Err(CodecError::TruncatedStream)
        ));
    }

    #[test]
    fn non_canonical_order_is_rejected() {
        let dmc = sphere_dmc(32);
        let mut records = dmc.records.clone();
        records.swap(0, 1);
        assert!(matches!(
            encode_records(dmc.resolution, &dmc.transform, &records),
            Err(CodecError::NonCanonicalOrder)
        ));
    }

    #[test]
    fn disjoint_components_assemble_independently() {
        // Two single-corner solids far apart: no shared corners, two closed
        // components.
        let r = 32u32;
        let keys = vec![
            crate::morton::encode(8, 8, 8),
            crate::morton::encode(24, 24, 24),
        ];
        let margins = vec![0.01, 0.01];
        let (grid, _) = crate::voxel::SparseCornerGrid::from_band(r, 0.01, keys, &margins, 0);
        let two = fixtures::merge(&[fixtures::tetrahedron(1e-4), {
            let mut t = fixtures::tetrahedron(1e-4);
            for p in &mut t.positions {
                *p += Vec3::new(0.5, 0.5, 0.5);
            }
            t
        }]);
        let field = LinfField::build(&two, 0.01, FieldMode::Linf).unwrap();
        let dmc = extract(&grid, &field, &ExtractConfig::default()).unwrap();
        let bytes = encode(&dmc).unwrap();
        let back = decode_mesh(&bytes).unwrap();
        assert_eq!(crate::mesh::connected_components(&back.assembled), 2);
        let report = crate::mesh::check_watertight_manifold(&back.assembled);
        assert!(report.closed && report.edge_manifold && report.oriented);
    }

    /// Records with valid coords/occupancy/offsets in canonical order (not
    /// necessarily mutually consistent; bit-exactness does not need that).
    fn arb_records(resolution: u32) -> impl Strategy<Value = Vec<DmcRecord>> {
        proptest::collection::btree_set(0u64..(resolution as u64).pow(3), 0..40)
            .prop_flat_map(move |cells| {
                let n = cells.len().max(1);
                (
                    Just(cells.into_iter().collect::<Vec<u64>>()),
                    proptest::collection::vec(0u8..=255, n),
                    proptest::collection::vec(0u8..8, n),
                    proptest::collection::vec(proptest::collection::vec(0.0f32..0.999, 12), n),
                )
            })
            .prop_map(move |(cells, bytes, tris, offsets)| {
                let table = case_table();
                let mut keys: Vec<u64> = cells
                    .iter()
                    .map(|&c| {
                        let i = (c % resolution as u64) as u32;
                        let j = ((c / resolution as u64) % resolution as u64) as u32;
                        let k = ((c / (resolution as u64).pow(2)) % resolution as u64) as u32;
                        crate::morton::encode(i, j, k)
                    })
                    .collect();
                keys.sort_unstable();
                keys.dedup();
                keys.iter()
                    .enumerate()
                    .map(|(n, &key)| {
                        let (i, j, k) = crate::morton::decode(key);
                        let occupancy = bytes[n % bytes.len()];
                        let mut offs = [[0.0f32; 3]; 4];
                        for s in 0..4 {
                            for a in 0..3 {
                                offs[s][a] = offsets[n % offsets.len()][s * 3 + a];
                            }
                        }
                        DmcRecord {
                            coords: [i as u16, j as u16, k as u16],
                            occupancy,
                            tri_bits: tris[n % tris.len()],
                            vertex_count: table.vertex_count[occupancy as usize],
                            offsets: offs,
                        }
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn prop_stream_roundtrip_bit_exact(records in arb_records(64)) {
            let t = NormalizationTransform::identity();
            let b1 = encode_records(64, &t, &records).unwrap();
            let decoded = decode(&b1).unwrap();
            let b2 = encode_records(64, &decoded.transform, &decoded.records).unwrap();
            prop_assert_eq!(b1, b2);
        }

        #[test]
        fn prop_quantization_idempotent(records in arb_records(32)) {
            let t = NormalizationTransform::identity();
            let b1 = encode_records(32, &t, &records).unwrap();
            let d1 = decode(&b1).unwrap();
            let b2 = encode_records(32, &t, &d1.records).unwrap();
            let d2 = decode(&b2).unwrap();
            // A second cycle changes nothing at all.
            prop_assert_eq!(d1.records, d2.records);
        }
    }
}
