//! Binary drop files.
//!
//! Layout, all little-endian:
//!
//! | offset | field |
//! |-------:|-------|
//! | 0  | magic `b"MR3D"` |
//! | 4  | version `u32` (1) |
//! | 8  | K, M, Nt, N_RB, N_SC `u32` each |
//! | 28 | reserved `u32` (0) |
//! | 32 | seed `u64` |
//! | 40 | wavelength in metres `f64` |
//! | 48 | n_azimuth, n_elevation, n_pol `u32` each |
//! | 60 | reserved `u32` (0) |
//!
//! followed by `complex64` entries (`f32` real, `f32` imaginary) in
//! (user, subcarrier, row, column) order. Entries are stored in single
//! precision, so a round trip is exact only for values representable as `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::channel::{ChannelTensor, TensorMeta};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

pub const MAGIC: [u8; 4] = *b"MR3D";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

fn dim(name: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{name} = {v} does not fit in u32")))
}

pub fn encode_header(meta: &TensorMeta) -> Result<[u8; HEADER_LEN]> {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&VERSION.to_le_bytes());
    let dims = [
        ("K", meta.n_users),
        ("M", meta.m),
        ("Nt", meta.nt),
        ("N_RB", meta.n_rb),
        ("N_SC", meta.n_sc),
    ];
    for (i, (name, v)) in dims.into_iter().enumerate() {
        let o = 8 + 4 * i;
        h[o..o + 4].copy_from_slice(&dim(name, v)?.to_le_bytes());
    }
    h[32..40].copy_from_slice(&meta.seed.to_le_bytes());
    h[40..48].copy_from_slice(&meta.wavelength_m.to_le_bytes());
    let layout = [
        ("n_azimuth", meta.n_azimuth),
        ("n_elevation", meta.n_elevation),
        ("n_pol", meta.n_pol),
    ];
    for (i, (name, v)) in layout.into_iter().enumerate() {
        let o = 48 + 4 * i;
        h[o..o + 4].copy_from_slice(&dim(name, v)?.to_le_bytes());
    }
    Ok(h)
}

fn u32_at(h: &[u8], o: usize) -> u32 {
    u32::from_le_bytes(h[o..o + 4].try_into().unwrap())
}

pub fn decode_header(h: &[u8; HEADER_LEN]) -> Result<TensorMeta> {
    if h[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &h[0..4])));
    }
    let version = u32_at(h, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let meta = TensorMeta {
        n_users: u32_at(h, 8) as usize,
        m: u32_at(h, 12) as usize,
        nt: u32_at(h, 16) as usize,
        n_rb: u32_at(h, 20) as usize,
        n_sc: u32_at(h, 24) as usize,
        seed: u64::from_le_bytes(h[32..40].try_into().unwrap()),
        wavelength_m: f64::from_le_bytes(h[40..48].try_into().unwrap()),
        n_azimuth: u32_at(h, 48) as usize,
        n_elevation: u32_at(h, 52) as usize,
        n_pol: u32_at(h, 56) as usize,
    };
    if meta.n_users == 0 || meta.m == 0 || meta.nt == 0 || meta.n_rb == 0 || meta.n_sc == 0 {
        return Err(Error::Format("zero dimension in header".into()));
    }
    Ok(meta)
}

pub fn write_tensor<W: Write>(tensor: &ChannelTensor, mut out: W) -> Result<()> {
    out.write_all(&encode_header(&tensor.meta)?)?;
    let mut buf = Vec::with_capacity(tensor.meta.m * tensor.meta.nt * 8);
    for per_user in &tensor.users {
        for h in per_user {
            buf.clear();
            for z in h.data() {
                buf.extend_from_slice(&(z.re as f32).to_le_bytes());
                buf.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            out.write_all(&buf)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut input: R) -> Result<ChannelTensor> {
    let mut header = [0u8; HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let meta = decode_header(&header)?;
    let entries = meta.m * meta.nt;
    let mut buf = vec![0u8; entries * 8];
    let mut users = Vec::with_capacity(meta.n_users);
    for _ in 0..meta.n_users {
        let mut per_user = Vec::with_capacity(meta.n_rb * meta.n_sc);
        for _ in 0..meta.n_rb * meta.n_sc {
            input
                .read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
            let data = buf
                .chunks_exact(8)
                .map(|c| {
                    let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                    let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                    C64::new(re as f64, im as f64)
                })
                .collect();
            per_user.push(ComplexMatrix::from_vec(meta.m, meta.nt, data)?);
        }
        users.push(per_user);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    ChannelTensor::new(meta, users)
}

pub fn save(tensor: &ChannelTensor, path: &Path) -> Result<()> {
    write_tensor(tensor, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<ChannelTensor> {
    read_tensor(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ChannelTensor {
        let meta = TensorMeta {
            n_users: 2,
            m: 2,
            nt: 3,
            n_rb: 1,
            n_sc: 2,
            wavelength_m: 0.15,
            seed: 0xDEAD_BEEF_0123_4567,
            n_azimuth: 3,
            n_elevation: 1,
            n_pol: 1,
        };
        let users = (0..2)
            .map(|u| {
                (0..2)
                    .map(|s| {
                        ComplexMatrix::from_fn(2, 3, |r, c| {
                            C64::new((u * 100 + s * 10 + r) as f64 * 0.5, c as f64 - 1.25)
                        })
                    })
                    .collect()
            })
            .collect();
        ChannelTensor::new(meta, users).unwrap()
    }

    #[test]
    fn header_layout() {
        let t = sample();
        let mut bytes = Vec::new();
        write_tensor(&t, &mut bytes).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 2 * 2 * 3 * 8);
        assert_eq!(&bytes[0..4], b"MR3D");
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!(u32_at(&bytes, 8), 2);
        assert_eq!(u32_at(&bytes, 16), 3);
        assert_eq!(u32_at(&bytes, 28), 0);
        assert_eq!(&bytes[32..40], &0xDEAD_BEEF_0123_4567u64.to_le_bytes());
        // First entry is user 0, subcarrier 0, row 0, column 0; the second
        // steps the column.
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        assert_eq!((f(64), f(68)), (0.0, -1.25));
        assert_eq!((f(72), f(76)), (0.0, -0.25));
        // User 1 begins after 2 subcarriers of 6 entries.
        assert_eq!(f(64 + 12 * 8), 50.0);
    }

    #[test]
    fn roundtrip_exact_for_f32_values() {
        let t = sample();
        let mut bytes = Vec::new();
        write_tensor(&t, &mut bytes).unwrap();
        let back = read_tensor(bytes.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = Vec::new();
        write_tensor(&sample(), &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor(bad.as_slice()), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(read_tensor(bad.as_slice()).is_err());
        assert!(read_tensor(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_tensor(long.as_slice()).is_err());
        assert!(read_tensor(&bytes[..10]).is_err());
    }
}
