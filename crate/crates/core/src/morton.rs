//! Morton (Z-order) codes for grid cells and corners.
//!
//! Cell coordinates need 10 bits per axis (resolutions up to 1024), corner
//! coordinates need 11 (up to 1025 samples per axis). Both fit a single
//! interleaved u64, which doubles as the canonical record ordering.

/// Spread the low 21 bits of `v` three apart (standard 3D Morton spread).
#[inline]
fn part(v: u64) -> u64 {
    let mut x = v & 0x1f_ffff;
    x = (x | (x << 32)) & 0x001f_0000_0000_ffff;
    x = (x | (x << 16)) & 0x001f_0000_ff00_00ff;
    x = (x | (x << 8)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x << 4)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x << 2)) & 0x1249_2492_4924_9249;
    x
}

#[inline]
fn unpart(v: u64) -> u32 {
    let mut x = v & 0x1249_2492_4924_9249;
    x = (x ^ (x >> 2)) & 0x10c3_0c30_c30c_30c3;
    x = (x ^ (x >> 4)) & 0x100f_00f0_0f00_f00f;
    x = (x ^ (x >> 8)) & 0x001f_0000_ff00_00ff;
    x = (x ^ (x >> 16)) & 0x001f_0000_0000_ffff;
    x = (x ^ (x >> 32)) & 0x1f_ffff;
    x as u32
}

/// Interleave three coordinates (up to 21 bits each) into a Morton code.
#[inline]
pub fn encode(i: u32, j: u32, k: u32) -> u64 {
    part(i as u64) | (part(j as u64) << 1) | (part(k as u64) << 2)
}

/// Inverse of [`encode`].
#[inline]
pub fn decode(code: u64) -> (u32, u32, u32) {
    (unpart(code), unpart(code >> 1), unpart(code >> 2))
}
