//! TUM trajectory files: `t tx ty tz qx qy qz qw` per line.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{Quaternion, UnitQuaternion};
use thiserror::Error;

use crate::geometry::{Pose, Rotation, Vec3};

#[derive(Error, Debug)]
pub enum TrajectoryError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trajectory line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn write_tum<W: Write>(mut w: W, poses: &[(f64, Pose)]) -> std::io::Result<()> {
    for (t, p) in poses {
        let q = UnitQuaternion::from_matrix(p.rotation.matrix());
        let (x, y, z) = (p.translation.x, p.translation.y, p.translation.z);
        writeln!(w, "{t:.6} {x:.9} {y:.9} {z:.9} {:.9} {:.9} {:.9} {:.9}", q.i, q.j, q.k, q.w)?;
    }
    Ok(())
}

/// Reads a TUM file; blank lines and `#` comments are skipped.
pub fn read_tum<R: Read>(reader: R) -> Result<Vec<(f64, Pose)>, TrajectoryError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let err = |msg: String| TrajectoryError::Parse { line: i + 1, msg };
        let v: Vec<f64> = s
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("{f:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != 8 {
            return Err(err(format!("expected 8 fields, got {}", v.len())));
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if !(q.norm() > 1e-6) {
            return Err(err("zero quaternion".into()));
        }
        let rot = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        out.push((v[0], Pose::new(Rotation::from_matrix_unchecked(*rot.matrix()), Vec3::new(v[1], v[2], v[3]))));
    }
    Ok(out)
}
