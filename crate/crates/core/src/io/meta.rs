//! Whitespace-separated particle metadata table, one row per stack image.
//!
//! Quaternion form (15 columns):
//! `index qw qx qy qz tx_px ty_px defocus_u defocus_v astig_angle voltage cs amp_contrast phase_shift b_factor`
//!
//! Matrix form (20 columns) replaces the quaternion with `r00 r01 ... r22`
//! (row-major). Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::gmm::rotation_from_quaternion;
use crate::optics::CtfParams;
use crate::splat::Pose;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Orientation {
    /// Scalar-first, not necessarily normalized.
    Quaternion([f64; 4]),
    /// Row-major rotation matrix.
    Matrix([f64; 9]),
}

impl Orientation {
    pub fn rotation(&self) -> Result<Matrix3<f64>> {
        match self {
            Orientation::Quaternion(q) => rotation_from_quaternion(q),
            Orientation::Matrix(m) => Ok(Matrix3::from_row_slice(m)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaRow {
    pub orientation: Orientation,
    /// Pixels.
    pub translation: Vector2<f64>,
    pub ctf: CtfParams,
}

impl MetaRow {
    /// Pose with zero splat translation; the image shift is handled separately.
    pub fn pose(&self) -> Result<Pose> {
        Pose::new(self.orientation.rotation()?, Vector2::zeros())
    }
}

const QUAT_HEADER: &str =
    "# index qw qx qy qz tx_px ty_px defocus_u defocus_v astig_angle voltage cs amp_contrast phase_shift b_factor";
const MATRIX_HEADER: &str = "# index r00 r01 r02 r10 r11 r12 r20 r21 r22 tx_px ty_px defocus_u defocus_v astig_angle voltage cs amp_contrast phase_shift b_factor";
const CTF_COLUMNS: usize = 8;

/// Serializes rows; floats use the shortest representation that parses back exactly.
pub fn format_meta(rows: &[MetaRow]) -> String {
    let all_quat = rows.iter().all(|r| matches!(r.orientation, Orientation::Quaternion(_)));
    let mut out = String::new();
    out.push_str(if all_quat { QUAT_HEADER } else { MATRIX_HEADER });
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let mut fields: Vec<f64> = match (r.orientation, all_quat) {
            (Orientation::Quaternion(q), true) => q.to_vec(),
            (o, _) => {
                let m = o.rotation().map(|m| m.transpose()).unwrap_or_else(|_| Matrix3::zeros());
                // column-major storage of the transpose is row-major of the original
                m.as_slice().to_vec()
            }
        };
        let c = &r.ctf;
        fields.extend([
            r.translation.x,
            r.translation.y,
            c.defocus_u,
            c.defocus_v,
            c.astigmatism_angle,
            c.voltage,
            c.spherical_aberration,
            c.amplitude_contrast,
            c.phase_shift,
            c.b_factor,
        ]);
        let _ = write!(out, "{i}");
        for v in fields {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_meta(text: &str) -> Result<Vec<MetaRow>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: String| Error::Format(format!("metadata line {}: {msg}", lineno + 1));
        if *width.get_or_insert(cols.len()) != cols.len() {
            return Err(bad(format!("expected {} columns, found {}", width.unwrap(), cols.len())));
        }
        let rot_cols = match cols.len() {
            n if n == 1 + 4 + 2 + CTF_COLUMNS => 4,
            n if n == 1 + 9 + 2 + CTF_COLUMNS => 9,
            n => return Err(bad(format!("expected 15 or 20 columns, found {n}"))),
        };
        let index: usize = cols[0].parse().map_err(|_| bad(format!("bad index '{}'", cols[0])))?;
        if index != rows.len() {
            return Err(bad(format!("index {index} out of sequence (expected {})", rows.len())));
        }
        let v = cols[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'"))))
            .collect::<Result<Vec<f64>>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        let orientation = if rot_cols == 4 {
            Orientation::Quaternion([v[0], v[1], v[2], v[3]])
        } else {
            let mut m = [0.0; 9];
            m.copy_from_slice(&v[..9]);
            Orientation::Matrix(m)
        };
        let t = &v[rot_cols..];
        let ctf = CtfParams {
            defocus_u: t[2],
            defocus_v: t[3],
            astigmatism_angle: t[4],
            voltage: t[5],
            spherical_aberration: t[6],
            amplitude_contrast: t[7],
            phase_shift: t[8],
            b_factor: t[9],
        };
        ctf.validate().map_err(|e| bad(e.to_string()))?;
        let row = MetaRow {
            orientation,
            translation: Vector2::new(t[0], t[1]),
            ctf,
        };
        row.pose().map_err(|e| bad(e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_meta(path: &Path, rows: &[MetaRow]) -> Result<()> {
    std::fs::write(path, format_meta(rows)).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<Vec<MetaRow>> {
    parse_meta(&std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(q: [f64; 4], tx: f64) -> MetaRow {
        MetaRow {
            orientation: Orientation::Quaternion(q),
            translation: Vector2::new(tx, -0.25),
            ctf: CtfParams {
                defocus_u: 12345.678901234567,
                defocus_v: 12000.1,
                ..Default::default()
            },
        }
    }

    #[test]
    fn quaternion_table_round_trips() {
        let rows = vec![row([1.0, 0.0, 0.0, 0.0], 0.0), row([0.1, 0.2, -0.3, 0.4], 1.0 / 3.0)];
        let text = format_meta(&rows);
        assert!(text.starts_with(QUAT_HEADER));
        assert_eq!(parse_meta(&text).unwrap(), rows);
    }

    #[test]
    fn matrix_table_is_accepted() {
        let text = "0 0 -1 0 1 0 0 0 0 1 0.5 0 15000 15000 0 300 2.7 0.1 0 0\n";
        let rows = parse_meta(text).unwrap();
        let r = rows[0].pose().unwrap();
        assert_eq!(r.rotation()[(0, 1)], -1.0);
        assert_eq!(r.rotation()[(1, 0)], 1.0);
        let again = parse_meta(&format_meta(&rows)).unwrap();
        assert_eq!(again, rows);
    }

    #[test]
    fn malformed_tables() {
        assert!(matches!(parse_meta("0 1 0 0\n"), Err(Error::Format(_))));
        let good = format_meta(&[row([1.0, 0.0, 0.0, 0.0], 0.0)]);
        let skipped = good.replacen("\n0 ", "\n1 ", 1);
        assert!(parse_meta(&skipped).is_err());
        let nan = good.replace(" 300.0 ", " NaN ");
        assert!(parse_meta(&nan).is_err());
        let not_rotation = "0 2 0 0 0 1 0 0 0 1 0 0 15000 15000 0 300 2.7 0.1 0 0\n";
        assert!(parse_meta(not_rotation).is_err());
    }

    proptest! {
        #[test]
        fn any_finite_values_round_trip(
            q in prop::array::uniform4(-1.0f64..1.0).prop_filter("nonzero", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-6),
            tx in -1e3f64..1e3,
            du in 1.0f64..1e5,
        ) {
            let mut r = row(q, tx);
            r.ctf.defocus_u = du;
            let rows = vec![r; 3];
            prop_assert_eq!(parse_meta(&format_meta(&rows)).unwrap(), rows);
        }
    }
}
