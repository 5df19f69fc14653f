//! SPE10 permeability ingestion.
//!
//! The dataset stores 60 x 220 x 85 cells per component, x-fastest, in
//! millidarcy; the first component block (kx) is used. The 220-cell/10-ft
//! direction of a layer is mapped to the problem x axis so the domain is
//! 2200 ft x 1200 ft, and all values are converted to m^2 on ingestion.

use crate::mesh::Mesh;
use thiserror::Error;

pub const DARCY_TO_M2: f64 = 9.869233e-13;
pub const MILLIDARCY_TO_M2: f64 = 1e-3 * DARCY_TO_M2;
pub const FT_TO_M: f64 = 0.3048;

/// Dataset cell counts: file x (layer thickness direction in our layout),
/// file y, layers.
pub const FILE_NX: usize = 60;
pub const FILE_NY: usize = 220;
pub const FILE_NZ: usize = 85;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("short file: expected {expected} values, found {found}")]
    ShortFile { expected: usize, found: usize },
    #[error("non-numeric token at byte offset {offset}")]
    BadToken { offset: usize },
    #[error("nonpositive permeability {value} at byte offset {offset}")]
    NonPositive { offset: usize, value: f64 },
    #[error("layer index {0} out of range (0..{FILE_NZ})")]
    LayerOutOfRange(usize),
    #[error("element barycentre ({0}, {1}) outside the raster")]
    OutsideRaster(f64, f64),
}

/// Permeability modification scenarios.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spe10Modification {
    None,
    /// Central 1100 ft x 20 ft streak at 1e6 Darcy.
    Streak,
    /// The same streak rotated about its centre.
    TiltedStreak { angle_deg: f64 },
    /// 20 ft crack across the full x extent at 1e15 Darcy.
    PiercingCrack,
}

impl Spe10Modification {
    pub fn label(&self) -> String {
        match self {
            Spe10Modification::None => "none".into(),
            Spe10Modification::Streak => "streak".into(),
            Spe10Modification::TiltedStreak { angle_deg } => {
                format!("tilted-streak-{angle_deg}deg")
            }
            Spe10Modification::PiercingCrack => "piercing".into(),
        }
    }
}

/// A single-layer permeability raster in SI units.
#[derive(Clone, Debug)]
pub struct PermRaster {
    pub nx: usize,
    pub ny: usize,
    /// Cell sizes in metres.
    pub dx: f64,
    pub dy: f64,
    /// Permeability in m^2, row-major: `perm[iy * nx + ix]`.
    pub perm: Vec<f64>,
    pub note: String,
}

impl PermRaster {
    pub fn extent(&self) -> [f64; 2] {
        [self.nx as f64 * self.dx, self.ny as f64 * self.dy]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [(ix as f64 + 0.5) * self.dx, (iy as f64 + 0.5) * self.dy]
    }

    /// Permeability of the cell containing `p`, `None` outside the raster.
    pub fn permeability_at(&self, p: [f64; 2]) -> Option<f64> {
        let [ex, ey] = self.extent();
        if p[0] < 0.0 || p[1] < 0.0 || p[0] > ex || p[1] > ey {
            return None;
        }
        let ix = ((p[0] / self.dx) as usize).min(self.nx - 1);
        let iy = ((p[1] / self.dy) as usize).min(self.ny - 1);
        Some(self.perm[iy * self.nx + ix])
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.perm {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

fn parse_kx_block(bytes: &[u8]) -> Result<Vec<f64>, IngestError> {
    let need = FILE_NX * FILE_NY * FILE_NZ;
    let mut values = Vec::with_capacity(need);
    let mut pos = 0;
    while pos < bytes.len() && values.len() < need {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| IngestError::BadToken { offset: start })?;
        let v: f64 = token
            .parse()
            .map_err(|_| IngestError::BadToken { offset: start })?;
        if !v.is_finite() || v <= 0.0 {
            return Err(IngestError::NonPositive { offset: start, value: v });
        }
        values.push(v);
    }
    if values.len() < need {
        return Err(IngestError::ShortFile { expected: need, found: values.len() });
    }
    Ok(values)
}

/// Ingest one layer of the kx block and apply the requested modification.
pub fn load_spe10(
    path: &str,
    layer: usize,
    modification: Spe10Modification,
) -> Result<PermRaster, IngestError> {
    if layer >= FILE_NZ {
        return Err(IngestError::LayerOutOfRange(layer));
    }
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_string(),
        source,
    })?;
    let kx = parse_kx_block(&bytes)?;

    // Layer extraction with the axis swap: problem x runs along the file's
    // 220-cell direction.
    let nx = FILE_NY;
    let ny = FILE_NX;
    let mut perm = vec![0.0; nx * ny];
    for ix in 0..nx {
        for iy in 0..ny {
            let file_idx = iy + FILE_NX * ix + FILE_NX * FILE_NY * layer;
            perm[iy * nx + ix] = kx[file_idx] * MILLIDARCY_TO_M2;
        }
    }
    let mut raster = PermRaster {
        nx,
        ny,
        dx: 10.0 * FT_TO_M,
        dy: 20.0 * FT_TO_M,
        perm,
        note: format!("layer {layer}, {}", modification.label()),
    };
    apply_modification(&mut raster, modification);
    Ok(raster)
}

fn apply_modification(raster: &mut PermRaster, modification: Spe10Modification) {
    let [ex, _ey] = raster.extent();
    let cx = 0.5 * ex;
    // Centre the band on the middle raster row so the 20 ft height selects
    // whole cells instead of tie-breaking on cell boundaries.
    let cy = (raster.ny as f64 / 2.0).floor() * raster.dy + 0.5 * raster.dy;
    let half_w = 0.5 * 1100.0 * FT_TO_M;
    let half_h = 0.5 * 20.0 * FT_TO_M;
    match modification {
        Spe10Modification::None => {}
        Spe10Modification::Streak => {
            let k = 1e6 * DARCY_TO_M2;
            overwrite_cells(raster, k, |p| {
                (p[0] - cx).abs() <= half_w && (p[1] - cy).abs() <= half_h
            });
        }
        Spe10Modification::TiltedStreak { angle_deg } => {
            let k = 1e6 * DARCY_TO_M2;
            let a = angle_deg.to_radians();
            let (s, c) = a.sin_cos();
            overwrite_cells(raster, k, |p| {
                let dx = p[0] - cx;
                let dy = p[1] - cy;
                let rx = c * dx + s * dy;
                let ry = -s * dx + c * dy;
                rx.abs() <= half_w && ry.abs() <= half_h
            });
        }
        Spe10Modification::PiercingCrack => {
            let k = 1e15 * DARCY_TO_M2;
            overwrite_cells(raster, k, |p| (p[1] - cy).abs() <= half_h);
        }
    }
}

fn overwrite_cells(raster: &mut PermRaster, k: f64, inside: impl Fn([f64; 2]) -> bool) {
    for iy in 0..raster.ny {
        for ix in 0..raster.nx {
            if inside(raster.cell_center(ix, iy)) {
                raster.perm[iy * raster.nx + ix] = k;
            }
        }
    }
}

/// sigma^2 = 1/K sampled at element barycentres, units 1/m^2.
pub fn raster_to_sigma2(raster: &PermRaster, mesh: &Mesh) -> Result<Vec<f64>, IngestError> {
    (0..mesh.n_triangles())
        .map(|k| {
            let c = mesh.centroid(k);
            raster
                .permeability_at(c)
                .map(|p| 1.0 / p)
                .ok_or(IngestError::OutsideRaster(c[0], c[1]))
        })
        .collect()
}

/// Deterministic synthetic kx block in the dataset layout (millidarcy),
/// with SPE10-like contrast. Stand-in for the real file in tests and demos.
pub fn synthetic_kx_block() -> Vec<f64> {
    let mut out = Vec::with_capacity(FILE_NX * FILE_NY * FILE_NZ);
    for iz in 0..FILE_NZ {
        for iy in 0..FILE_NY {
            for ix in 0..FILE_NX {
                let a = 2.0
                    * (0.35 * ix as f64 + 0.1 * iz as f64).sin()
                    * (0.18 * iy as f64).cos();
                let b = (0.07 * (ix as f64) * (iy as f64 % 17.0) + iz as f64).sin();
                out.push(10f64.powf(a + b));
            }
        }
    }
    out
}

/// Write a synthetic permeability file in the SPE10 kx format.
pub fn write_synthetic_file(path: &std::path::Path) -> std::io::Result<()> {
    use std::io::Write;
    let vals = synthetic_kx_block();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for chunk in vals.chunks(6) {
        for v in chunk {
            write!(f, " {v:e}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, refine};

    #[test]
    fn units_round_trip() {
        for k_darcy in [1.0, 1e-3, 1e6, 1e15] {
            let m2 = k_darcy * DARCY_TO_M2;
            let back = m2 / DARCY_TO_M2;
            assert!((back - k_darcy).abs() <= 1e-14 * k_darcy);
        }
    }

    #[test]
    fn ingestion_and_modifications() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("perm.dat");
        write_synthetic_file(&path).unwrap();
        let p = path.to_str().unwrap();

        let raw = load_spe10(p, 68, Spe10Modification::None).unwrap();
        assert_eq!(raw.nx, 220);
        assert_eq!(raw.ny, 60);
        // Extrema match an independent scan of the layer.
        let vals = synthetic_kx_block();
        let layer = &vals[FILE_NX * FILE_NY * 68..FILE_NX * FILE_NY * 69];
        let lo = layer.iter().cloned().fold(f64::INFINITY, f64::min) * MILLIDARCY_TO_M2;
        let hi = layer.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * MILLIDARCY_TO_M2;
        let (rlo, rhi) = raw.min_max();
        assert!((rlo - lo).abs() < 1e-20 && (rhi - hi).abs() < 1e-20);

        // Streak: all cell centres inside the central rectangle carry 1e6 D.
        let streak = load_spe10(p, 68, Spe10Modification::Streak).unwrap();
        let [ex, _ey] = streak.extent();
        let band_cy = (streak.ny / 2) as f64 * streak.dy + 0.5 * streak.dy;
        let mut n_streak = 0;
        for iy in 0..streak.ny {
            for ix in 0..streak.nx {
                let c = streak.cell_center(ix, iy);
                let inside = (c[0] - 0.5 * ex).abs() <= 550.0 * FT_TO_M
                    && (c[1] - band_cy).abs() <= 10.0 * FT_TO_M;
                if inside {
                    n_streak += 1;
                    assert_eq!(streak.perm[iy * streak.nx + ix], 1e6 * DARCY_TO_M2);
                }
            }
        }
        assert_eq!(n_streak, 110); // 1100 ft / 10 ft cells, one 20 ft row

        // Piercing crack spans the full x extent at the band row.
        let crack = load_spe10(p, 68, Spe10Modification::PiercingCrack).unwrap();
        let iy = crack.ny / 2;
        for ix in 0..crack.nx {
            assert_eq!(crack.perm[iy * crack.nx + ix], 1e15 * DARCY_TO_M2);
        }

        // Tilted streak selects a rotated band.
        let tilt = load_spe10(p, 68, Spe10Modification::TiltedStreak { angle_deg: 15.0 }).unwrap();
        let n_tilt = tilt.perm.iter().filter(|&&v| v == 1e6 * DARCY_TO_M2).count();
        assert!(n_tilt > 50, "tilted streak too small: {n_tilt}");

        assert!(load_spe10(p, 85, Spe10Modification::None).is_err());
    }

    #[test]
    fn ingestion_errors_name_byte_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let short = dir.path().join("short.dat");
        std::fs::write(&short, "1.0 2.0 3.0").unwrap();
        match load_spe10(short.to_str().unwrap(), 0, Spe10Modification::None) {
            Err(IngestError::ShortFile { found: 3, .. }) => {}
            other => panic!("expected short-file error, got {other:?}"),
        }

        let bad = dir.path().join("bad.dat");
        std::fs::write(&bad, "1.0 2.0 oops 4.0").unwrap();
        match load_spe10(bad.to_str().unwrap(), 0, Spe10Modification::None) {
            Err(IngestError::BadToken { offset: 8 }) => {}
            other => panic!("expected bad-token at 8, got {other:?}"),
        }

        let neg = dir.path().join("neg.dat");
        std::fs::write(&neg, "1.0 -2.0").unwrap();
        match load_spe10(neg.to_str().unwrap(), 0, Spe10Modification::None) {
            Err(IngestError::NonPositive { offset: 4, .. }) => {}
            other => panic!("expected nonpositive at 4, got {other:?}"),
        }
    }

    #[test]
    fn sigma2_sampling_and_refinement() {
        // Uniform 1 Darcy raster: sigma^2 = 1/(1 D in m^2) everywhere.
        let uniform = PermRaster {
            nx: 4,
            ny: 2,
            dx: 1.0,
            dy: 1.0,
            perm: vec![DARCY_TO_M2; 8],
            note: "uniform".into(),
        };
        let mesh = build_rect_mesh(4, 2, [0.0, 0.0, 4.0, 2.0]).unwrap();
        let s2 = raster_to_sigma2(&uniform, &mesh).unwrap();
        for v in &s2 {
            assert!((v - 1.0 / DARCY_TO_M2).abs() < 1e-3);
        }

        // A mesh larger than the raster is rejected.
        let big = build_rect_mesh(2, 2, [0.0, 0.0, 8.0, 8.0]).unwrap();
        assert!(raster_to_sigma2(&uniform, &big).is_err());

        // Refinement of an element inside a high-permeability cell keeps the
        // re-sampled value.
        let mut two = PermRaster {
            nx: 2,
            ny: 1,
            dx: 1.0,
            dy: 1.0,
            perm: vec![DARCY_TO_M2, 1e15 * DARCY_TO_M2],
            note: "two-cell".into(),
        };
        two.note.push_str(" test");
        let mesh = build_rect_mesh(2, 1, [0.0, 0.0, 2.0, 1.0]).unwrap();
        let crack_elems: Vec<usize> = (0..mesh.n_triangles())
            .filter(|&k| mesh.centroid(k)[0] > 1.0)
            .collect();
        let fine = refine(&mesh, &crack_elems);
        let s2 = raster_to_sigma2(&two, &fine).unwrap();
        for k in 0..fine.n_triangles() {
            if fine.centroid(k)[0] > 1.0 {
                assert!((s2[k] - 1.0 / (1e15 * DARCY_TO_M2)).abs() < 1e-20);
            }
        }
    }
}
