//! Binary snapshot files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic       9 bytes   "AXISWIRL1"
//! r_min..z_max  4 x f64
//! h_r, h_z      2 x f64   (stored, not re-derived, so rescaled grids round-trip)
//! n_r, n_z      2 x u64
//! z_periodic    u8
//! derived_fresh u8
//! t             f64
//! n_fields      u32
//! field names   n x (u32 length + UTF-8 bytes)
//! checksum      u64       FNV-1a over the payload bytes
//! payload       per field: n_r * n_z f64, r-fastest row order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{FlowState, ScalarField};
use crate::geometry::Grid;

pub const MAGIC: &[u8; 9] = b"AXISWIRL1";

const FIELD_ORDER: [&str; 7] = [
    "gamma",
    "omega",
    "l_theta",
    "v_r",
    "v_theta",
    "v_z",
    "omega_theta",
];

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn field_bytes(f: &ScalarField) -> Vec<u8> {
    let mut out = Vec::with_capacity(f.values().len() * 8);
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_state(path: &Path, state: &FlowState) -> Result<()> {
    let g = state.grid();
    let fields: [&ScalarField; 7] = [
        &state.gamma,
        &state.omega,
        &state.l_theta,
        &state.v_r,
        &state.v_theta,
        &state.v_z,
        &state.omega_theta,
    ];

    let mut payload = Vec::with_capacity(7 * g.len() * 8);
    for f in &fields {
        payload.extend_from_slice(&field_bytes(f));
    }
    let checksum = fnv1a64(&payload);

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [g.r_min, g.r_max, g.z_min, g.z_max, g.h_r, g.h_z] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(g.n_r as u64).to_le_bytes())?;
    w.write_all(&(g.n_z as u64).to_le_bytes())?;
    w.write_all(&[g.z_periodic as u8, state.derived_fresh as u8])?;
    w.write_all(&state.t.to_le_bytes())?;
    w.write_all(&(FIELD_ORDER.len() as u32).to_le_bytes())?;
    for name in FIELD_ORDER {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }
    w.write_all(&checksum.to_le_bytes())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }
}

pub fn read_state(path: &Path) -> Result<FlowState> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let mut magic = [0u8; 9];
    r.inner.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot(format!(
            "{}: bad magic, not an AXISWIRL1 snapshot",
            path.display()
        )));
    }
    let r_min = r.f64()?;
    let r_max = r.f64()?;
    let z_min = r.f64()?;
    let z_max = r.f64()?;
    let h_r = r.f64()?;
    let h_z = r.f64()?;
    let n_r = r.u64()? as usize;
    let n_z = r.u64()? as usize;
    let z_periodic = r.u8()? != 0;
    let derived_fresh = r.u8()? != 0;
    let t = r.f64()?;

    let mut grid = Grid::new(r_min, r_max, z_min, z_max, n_r, n_z, z_periodic)
        .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
    // Spacings are authoritative from the file.
    grid.h_r = h_r;
    grid.h_z = h_z;

    let n_fields = r.u32()? as usize;
    let mut names = Vec::with_capacity(n_fields);
    for _ in 0..n_fields {
        let len = r.u32()? as usize;
        if len > 256 {
            return Err(Error::Snapshot("unreasonable field name length".into()));
        }
        let mut buf = vec![0u8; len];
        r.inner.read_exact(&mut buf)?;
        names.push(String::from_utf8(buf).map_err(|_| {
            Error::Snapshot("field name is not valid UTF-8".into())
        })?);
    }
    if names != FIELD_ORDER {
        return Err(Error::Snapshot(format!(
            "unexpected field list {names:?}"
        )));
    }
    let checksum = r.u64()?;

    let mut payload = Vec::new();
    r.inner.read_to_end(&mut payload)?;
    let expected = n_fields * grid.len() * 8;
    if payload.len() != expected {
        return Err(Error::Snapshot(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    if fnv1a64(&payload) != checksum {
        return Err(Error::Snapshot(format!(
            "{}: checksum mismatch, snapshot corrupt",
            path.display()
        )));
    }

    let mut fields = Vec::with_capacity(n_fields);
    for (k, name) in names.iter().enumerate() {
        let base = k * grid.len() * 8;
        let mut values = Vec::with_capacity(grid.len());
        for n in 0..grid.len() {
            let off = base + n * 8;
            let mut b = [0u8; 8];
            b.copy_from_slice(&payload[off..off + 8]);
            values.push(f64::from_le_bytes(b));
        }
        fields.push(ScalarField::from_values(grid, name, values)?);
    }

    let mut it = fields.into_iter();
    let gamma = it.next().unwrap();
    let omega = it.next().unwrap();
    let mut state = FlowState::from_prognostic(t, gamma, omega);
    state.l_theta = it.next().unwrap();
    state.v_r = it.next().unwrap();
    state.v_theta = it.next().unwrap();
    state.v_z = it.next().unwrap();
    state.omega_theta = it.next().unwrap();
    state.derived_fresh = derived_fresh;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Family;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = std::env::temp_dir().join("axiswirl_snapshot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.snap");

        let g = Grid::new(0.5, 5.0, -5.0, 5.0, 16, 24, false).unwrap();
        let state = Family::Coupled.state_at(g, 0.375);
        write_state(&path, &state).unwrap();
        let back = read_state(&path).unwrap();

        assert_eq!(back.t, state.t);
        assert_eq!(back.grid(), g);
        assert_eq!(back.derived_fresh, state.derived_fresh);
        for (a, b) in [
            (&state.gamma, &back.gamma),
            (&state.omega, &back.omega),
            (&state.l_theta, &back.l_theta),
            (&state.v_r, &back.v_r),
            (&state.v_theta, &back.v_theta),
            (&state.v_z, &back.v_z),
            (&state.omega_theta, &back.omega_theta),
        ] {
            assert_eq!(a.values(), b.values());
        }

        // Identical writes produce identical bytes.
        let path2 = dir.join("state2.snap");
        write_state(&path2, &state).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = std::env::temp_dir().join("axiswirl_snapshot_corrupt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.snap");
        let g = Grid::new(0.5, 5.0, -5.0, 5.0, 16, 24, false).unwrap();
        write_state(&path, &Family::Coupled.state_at(g, 0.0)).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 5;
        bytes[last] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        let err = read_state(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");

        // Bad magic.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'Z';
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_state(&path).is_err());
    }
}
