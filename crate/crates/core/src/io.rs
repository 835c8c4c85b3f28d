//! NIfTI-1 loading/saving and discovery of the benchmark directory layout.
//!
//! Ground truth lives under `<dataset-root>/<case_id>/` as
//! `annotation_1..5.nii.gz`, `annotation_vascular.nii.gz`,
//! `annotation_staple.nii.gz` and `image.nii.gz`. A submission root holds
//! `<case_id>_binary.nii.gz` and `<case_id>_prob.nii.gz`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use ndarray::{Array3, Axis, Ix3, ShapeBuilder};
use nifti::{IntoNdArray, NiftiHeader, NiftiObject, NiftiType, ReaderOptions};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::grid::{BinaryMask, Geometry, Grid, LabelMap, ProbMap, VoxelGrid};

pub const RATER_COUNT: usize = 5;
pub const ANNOTATION_LABELS: &[u8] = &[0, 1, 2];
pub const TUMOR_LABEL: u8 = 1;
pub const PARENCHYMA_LABEL: u8 = 2;
pub const VESSEL_LABELS: &[u8] = &[0, 1, 2, 3, 4, 5];

pub fn annotation_file(rater: usize) -> String {
    format!("annotation_{rater}.nii.gz")
}
pub const VASCULAR_FILE: &str = "annotation_vascular.nii.gz";
pub const STAPLE_FILE: &str = "annotation_staple.nii.gz";
pub const IMAGE_FILE: &str = "image.nii.gz";

pub fn binary_prediction_file(case_id: &str) -> String {
    format!("{case_id}_binary.nii.gz")
}

pub fn prob_prediction_file(case_id: &str) -> String {
    format!("{case_id}_prob.nii.gz")
}

/// Loads a 3-D NIfTI volume, promoting the payload to `f64` and
/// canonicalizing the axis order (see [`canonicalize`]).
pub fn load_grid(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(EvalError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let obj = ReaderOptions::new()
        .read_file(path)
        .map_err(|e| EvalError::Header {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
    let header = obj.header().clone();
    let ndim = header.dim[0] as usize;
    if !(3..=7).contains(&ndim) || header.dim[4..=ndim.max(3)].iter().any(|&d| d > 1) {
        return Err(EvalError::UnsupportedDimensionality(ndim.min(7)));
    }
    let dims = [
        header.dim[1] as usize,
        header.dim[2] as usize,
        header.dim[3] as usize,
    ];
    let mut array = obj
        .into_volume()
        .into_ndarray::<f64>()
        .map_err(|e| EvalError::Header {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
    while array.ndim() > 3 {
        let last = Axis(array.ndim() - 1);
        array = array.index_axis_move(last, 0);
    }
    let array = array
        .into_dimensionality::<Ix3>()
        .ok()
        .filter(|a| a.shape() == dims)
        .ok_or_else(|| EvalError::Header {
            path: path.to_owned(),
            reason: "payload does not match header dims".into(),
        })?;
    // `t()` iterates x fastest, the lattice storage order.
    let data: Vec<f64> = array.t().iter().copied().collect();

    let spacing = [
        f64::from(header.pixdim[1]).abs(),
        f64::from(header.pixdim[2]).abs(),
        f64::from(header.pixdim[3]).abs(),
    ];
    let (direction, origin) = header_orientation(&header);
    let geometry = Geometry::with_orientation(dims, spacing, direction, origin).map_err(|e| {
        EvalError::Header {
            path: path.to_owned(),
            reason: e.to_string(),
        }
    })?;
    let grid = Grid::from_vec(geometry, data)?;
    Ok(canonicalize(grid))
}

/// Direction cosines (columns per array axis) and origin from the sform,
/// falling back to the qform and then to a plain scaling.
fn header_orientation(h: &NiftiHeader) -> ([[f64; 3]; 3], [f64; 3]) {
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    if h.sform_code > 0 {
        let rows = [h.srow_x, h.srow_y, h.srow_z];
        let mut dir = [[0.0; 3]; 3];
        for j in 0..3 {
            let norm = (0..3)
                .map(|i| f64::from(rows[i][j]).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return (identity, [0.0; 3]);
            }
            for i in 0..3 {
                dir[i][j] = f64::from(rows[i][j]) / norm;
            }
        }
        let origin = [
            f64::from(rows[0][3]),
            f64::from(rows[1][3]),
            f64::from(rows[2][3]),
        ];
        (dir, origin)
    } else if h.qform_code > 0 {
        let (b, c, d) = (
            f64::from(h.quatern_b),
            f64::from(h.quatern_c),
            f64::from(h.quatern_d),
        );
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let qfac = if h.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let r = [
            [
                a * a + b * b - c * c - d * d,
                2.0 * (b * c - a * d),
                2.0 * (b * d + a * c),
            ],
            [
                2.0 * (b * c + a * d),
                a * a + c * c - b * b - d * d,
                2.0 * (c * d - a * b),
            ],
            [
                2.0 * (b * d - a * c),
                2.0 * (c * d + a * b),
                a * a + d * d - b * b - c * c,
            ],
        ];
        let mut dir = r;
        for row in &mut dir {
            row[2] *= qfac;
        }
        let origin = [
            f64::from(h.quatern_x),
            f64::from(h.quatern_y),
            f64::from(h.quatern_z),
        ];
        (dir, origin)
    } else {
        (identity, [0.0; 3])
    }
}

/// Reorders and flips array axes so that axis `i` runs along +world axis `i`.
///
/// Obliquely oriented volumes whose axes do not map one-to-one onto world
/// axes are returned unchanged.
pub fn canonicalize<T: Copy>(grid: Grid<T>) -> Grid<T> {
    let g = grid.geometry().clone();
    // perm[j] = world axis closest to array axis j
    let mut perm = [0usize; 3];
    for (j, p) in perm.iter_mut().enumerate() {
        *p = (0..3)
            .max_by(|&a, &b| g.direction[a][j].abs().total_cmp(&g.direction[b][j].abs()))
            .unwrap_or(j);
    }
    let mut seen = [false; 3];
    for &p in &perm {
        seen[p] = true;
    }
    if !seen.iter().all(|&s| s) {
        warn!("oblique orientation {:?}; axes left as stored", g.direction);
        return grid;
    }
    let flip: [bool; 3] = std::array::from_fn(|j| g.direction[perm[j]][j] < 0.0);
    if perm == [0, 1, 2] && !flip.iter().any(|&f| f) {
        return grid;
    }

    let mut dims = [0usize; 3];
    let mut spacing = [0.0; 3];
    let mut direction = [[0.0; 3]; 3];
    let mut origin = g.origin;
    for j in 0..3 {
        let i = perm[j];
        dims[i] = g.dims[j];
        spacing[i] = g.spacing[j];
        let sign = if flip[j] { -1.0 } else { 1.0 };
        for w in 0..3 {
            direction[w][i] = sign * g.direction[w][j];
        }
        if flip[j] {
            let extent = g.spacing[j] * (g.dims[j] as f64 - 1.0);
            for (w, o) in origin.iter_mut().enumerate() {
                *o += g.direction[w][j] * extent;
            }
        }
    }
    let new_geometry = Geometry {
        dims,
        spacing,
        direction,
        origin,
    };
    let old = grid.data();
    let mut data = Vec::with_capacity(old.len());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let new_c = [x, y, z];
                let mut old_c = [0usize; 3];
                for j in 0..3 {
                    let c = new_c[perm[j]];
                    old_c[j] = if flip[j] { g.dims[j] - 1 - c } else { c };
                }
                data.push(old[g.index(old_c[0], old_c[1], old_c[2])]);
            }
        }
    }
    Grid::from_vec(new_geometry, data).expect("permuted payload has the same length")
}

fn header_for(geometry: &Geometry) -> NiftiHeader {
    let mut h = NiftiHeader::default();
    h.pixdim = [1.0; 8];
    for a in 0..3 {
        h.pixdim[a + 1] = geometry.spacing[a] as f32;
    }
    let mut rows = [[0f32; 4]; 3];
    for (i, row) in rows.iter_mut().enumerate() {
        for j in 0..3 {
            row[j] = (geometry.direction[i][j] * geometry.spacing[j]) as f32;
        }
        row[3] = geometry.origin[i] as f32;
    }
    h.srow_x = rows[0];
    h.srow_y = rows[1];
    h.srow_z = rows[2];
    h.sform_code = 1;
    h.qform_code = 0;
    // mm
    h.xyzt_units = 2;
    h
}

fn to_array<T: Copy>(grid: &Grid<T>) -> Array3<T> {
    let [nx, ny, nz] = grid.dims();
    Array3::from_shape_vec((nx, ny, nz).f(), grid.data().to_vec())
        .expect("payload length matches dims")
}

fn write_error(path: &Path, e: nifti::NiftiError) -> EvalError {
    EvalError::io(path, std::io::Error::other(e.to_string()))
}

pub fn save_labels(grid: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = header_for(grid.geometry());
    nifti::writer::WriterOptions::new(path)
        .reference_header(&header)
        .write_nifti(&to_array(grid))
        .map_err(|e| write_error(path, e))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_labels(&mask.map(|&b| u8::from(b)), path)
}

pub fn save_f32(grid: &Grid<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = header_for(grid.geometry());
    nifti::writer::WriterOptions::new(path)
        .reference_header(&header)
        .write_nifti_with_type(&to_array(grid), NiftiType::Float32)
        .map_err(|e| write_error(path, e))
}

pub fn save_prob(prob: &ProbMap, path: impl AsRef<Path>) -> Result<()> {
    save_f32(prob.as_grid(), path)
}

/// Converts a real payload to integer labels, rejecting values outside `allowed`.
pub fn to_label_map(grid: &VoxelGrid, allowed: &[u8]) -> Result<LabelMap> {
    let mut data = Vec::with_capacity(grid.data().len());
    for &v in grid.data() {
        let r = v.round();
        if (v - r).abs() > 1e-6 || !(0.0..=255.0).contains(&r) || !allowed.contains(&(r as u8)) {
            return Err(EvalError::InvalidPayload(format!(
                "label value {v} not in declared set {allowed:?}"
            )));
        }
        data.push(r as u8);
    }
    Grid::from_vec(grid.geometry().clone(), data)
}

pub fn to_prob_map(grid: &VoxelGrid) -> Result<ProbMap> {
    ProbMap::new(grid.map(|&v| v as f32))
}

pub fn load_labels(path: impl AsRef<Path>, allowed: &[u8]) -> Result<LabelMap> {
    to_label_map(&load_grid(path)?, allowed)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(load_labels(path, &[0, 1])?.extract(1))
}

pub fn load_prob(path: impl AsRef<Path>) -> Result<ProbMap> {
    to_prob_map(&load_grid(path)?)
}

/// Expert reference data for one study.
#[derive(Debug, Clone)]
pub struct Reference {
    pub case_id: String,
    pub image: Option<VoxelGrid>,
    /// Tumor-only masks, one per rater.
    pub rater_masks: Vec<BinaryMask>,
    pub vessel_map: LabelMap,
    pub staple_mask: BinaryMask,
}

impl Reference {
    pub fn new(
        case_id: impl Into<String>,
        rater_masks: Vec<BinaryMask>,
        vessel_map: LabelMap,
        staple_mask: BinaryMask,
    ) -> Result<Self> {
        if rater_masks.len() != RATER_COUNT {
            return Err(EvalError::InvalidParameter(format!(
                "expected {RATER_COUNT} rater masks, got {}",
                rater_masks.len()
            )));
        }
        for m in &rater_masks {
            vessel_map.ensure_same_geometry(m)?;
        }
        vessel_map.ensure_same_geometry(&staple_mask)?;
        if let Some(bad) = vessel_map
            .data()
            .iter()
            .find(|v| !VESSEL_LABELS.contains(v))
        {
            return Err(EvalError::InvalidPayload(format!(
                "vessel label {bad} not in 0..=5"
            )));
        }
        Ok(Reference {
            case_id: case_id.into(),
            image: None,
            rater_masks,
            vessel_map,
            staple_mask,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        self.vessel_map.geometry()
    }
}

/// A method's outputs for one study.
#[derive(Debug, Clone)]
pub struct Submission {
    pub pred_bin: BinaryMask,
    pub pred_prob: ProbMap,
}

/// Reference data and one submission, validated to share a lattice.
#[derive(Debug, Clone)]
pub struct CaseBundle {
    pub reference: Arc<Reference>,
    pub submission: Submission,
}

impl CaseBundle {
    pub fn new(reference: Arc<Reference>, submission: Submission) -> Result<Self> {
        reference
            .vessel_map
            .ensure_same_geometry(&submission.pred_bin)?;
        reference
            .vessel_map
            .ensure_same_geometry(&submission.pred_prob)?;
        if let Some(image) = &reference.image {
            reference.vessel_map.ensure_same_geometry(image)?;
        }
        Ok(CaseBundle {
            reference,
            submission,
        })
    }

    pub fn case_id(&self) -> &str {
        &self.reference.case_id
    }
}

/// File locations of one complete case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDescriptor {
    pub case_id: String,
    pub dir: PathBuf,
    pub annotations: Vec<PathBuf>,
    pub vascular: PathBuf,
    pub staple: PathBuf,
    pub image: PathBuf,
    pub prediction: Option<PredictionFiles>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionFiles {
    pub binary: PathBuf,
    pub prob: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompleteCase {
    pub case_id: String,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    pub complete: Vec<CaseDescriptor>,
    pub incomplete: Vec<IncompleteCase>,
}

pub fn prediction_files(submission_root: &Path, case_id: &str) -> PredictionFiles {
    PredictionFiles {
        binary: submission_root.join(binary_prediction_file(case_id)),
        prob: submission_root.join(prob_prediction_file(case_id)),
    }
}

/// Scans `dataset_root` for case directories. When `submission_root` is
/// given, the two prediction files are also required. Incomplete cases are
/// reported with a warning and skipped. Results are sorted by case id.
pub fn discover_cases(dataset_root: &Path, submission_root: Option<&Path>) -> Result<Discovery> {
    let entries = std::fs::read_dir(dataset_root).map_err(|e| EvalError::io(dataset_root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut out = Discovery::default();
    for dir in dirs {
        let case_id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let annotations: Vec<PathBuf> = (1..=RATER_COUNT)
            .map(|k| dir.join(annotation_file(k)))
            .collect();
        let mut required: Vec<PathBuf> = annotations.clone();
        required.extend([
            dir.join(VASCULAR_FILE),
            dir.join(STAPLE_FILE),
            dir.join(IMAGE_FILE),
        ]);
        let prediction = submission_root.map(|root| prediction_files(root, &case_id));
        if let Some(p) = &prediction {
            required.extend([p.binary.clone(), p.prob.clone()]);
        }
        let missing: Vec<String> = required
            .iter()
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            warn!("case {case_id} incomplete, skipping: missing {missing:?}");
            out.incomplete.push(IncompleteCase { case_id, missing });
            continue;
        }
        out.complete.push(CaseDescriptor {
            case_id,
            vascular: dir.join(VASCULAR_FILE),
            staple: dir.join(STAPLE_FILE),
            image: dir.join(IMAGE_FILE),
            dir,
            annotations,
            prediction,
        });
    }
    Ok(out)
}

/// Loads the reference side of a case. Each annotation is reduced to its
/// tumor label; the CT volume is only read when `with_image` is set.
pub fn load_reference(desc: &CaseDescriptor, with_image: bool) -> Result<Reference> {
    let rater_masks = desc
        .annotations
        .iter()
        .map(|p| Ok(load_labels(p, ANNOTATION_LABELS)?.extract(TUMOR_LABEL)))
        .collect::<Result<Vec<_>>>()?;
    let vessel_map = load_labels(&desc.vascular, VESSEL_LABELS)?;
    let staple_mask = load_labels(&desc.staple, ANNOTATION_LABELS)?.extract(TUMOR_LABEL);
    let mut reference = Reference::new(desc.case_id.clone(), rater_masks, vessel_map, staple_mask)?;
    if with_image {
        let image = load_grid(&desc.image)?;
        reference.vessel_map.ensure_same_geometry(&image)?;
        reference.image = Some(image);
    }
    Ok(reference)
}

pub fn load_submission(files: &PredictionFiles) -> Result<Submission> {
    let pred_bin = load_mask(&files.binary)?;
    let pred_prob = load_prob(&files.prob)?;
    pred_bin.ensure_same_geometry(&pred_prob)?;
    Ok(Submission {
        pred_bin,
        pred_prob,
    })
}

/// Writes a reference case in the benchmark layout under `root/<case_id>/`.
pub fn write_reference(reference: &Reference, image: &Grid<f32>, root: &Path) -> Result<PathBuf> {
    let dir = root.join(&reference.case_id);
    std::fs::create_dir_all(&dir).map_err(|e| EvalError::io(&dir, e))?;
    for (k, m) in reference.rater_masks.iter().enumerate() {
        save_mask(m, dir.join(annotation_file(k + 1)))?;
    }
    save_labels(&reference.vessel_map, dir.join(VASCULAR_FILE))?;
    save_mask(&reference.staple_mask, dir.join(STAPLE_FILE))?;
    save_f32(image, dir.join(IMAGE_FILE))?;
    Ok(dir)
}

pub fn write_submission(case_id: &str, submission: &Submission, root: &Path) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| EvalError::io(root, e))?;
    let files = prediction_files(root, case_id);
    save_mask(&submission.pred_bin, files.binary)?;
    save_prob(&submission.pred_prob, files.prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> Geometry {
        Geometry::new([4, 4, 4], [0.7, 0.7, 3.0]).unwrap()
    }

    #[test]
    fn label_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<u8> = (0..64).map(|i| (i % 6) as u8).collect();
        let grid = LabelMap::from_vec(geometry(), data).unwrap();
        let path = dir.path().join("labels.nii.gz");
        save_labels(&grid, &path).unwrap();
        let back = load_labels(&path, VESSEL_LABELS).unwrap();
        assert_eq!(back.data(), grid.data());
        assert_eq!(back.spacing(), [0.7f32 as f64, 0.7f32 as f64, 3.0]);
        assert!((back.geometry().voxel_volume_mm3() - 1.47).abs() < 1e-6);
    }

    #[test]
    fn prob_round_trip_within_f32() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..64).map(|i| i as f32 / 63.0).collect();
        let prob = ProbMap::new(Grid::from_vec(geometry(), data).unwrap()).unwrap();
        let path = dir.path().join("prob.nii.gz");
        save_prob(&prob, &path).unwrap();
        let back = load_prob(&path).unwrap();
        assert_eq!(back.data(), prob.data());
    }

    #[test]
    fn two_dimensional_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.nii.gz");
        let mut header = NiftiHeader::default();
        header.sform_code = 0;
        header.qform_code = 0;
        let arr = ndarray::Array2::<u8>::zeros((4, 4));
        nifti::writer::WriterOptions::new(&path)
            .reference_header(&header)
            .write_nifti(&arr)
            .unwrap();
        match load_grid(&path) {
            Err(EvalError::UnsupportedDimensionality(2)) => {}
            other => panic!("expected unsupported dimensionality, got {other:?}"),
        }
    }

    #[test]
    fn missing_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_grid(dir.path().join("nope.nii.gz")),
            Err(EvalError::Io { .. })
        ));
        let bad = dir.path().join("bad.nii.gz");
        std::fs::write(&bad, b"not a nifti file").unwrap();
        assert!(matches!(load_grid(&bad), Err(EvalError::Header { .. })));
    }

    #[test]
    fn flipped_and_permuted_axes_are_canonicalized() {
        // array axis 0 -> world y (negated), axis 1 -> world x, axis 2 -> world z
        let direction = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let g =
            Geometry::with_orientation([2, 3, 1], [1.0, 2.0, 3.0], direction, [0.0; 3]).unwrap();
        let grid = Grid::from_vec(g, vec![0u8, 1, 2, 3, 4, 5]).unwrap();
        let c = canonicalize(grid);
        assert_eq!(c.dims(), [3, 2, 1]);
        assert_eq!(c.spacing(), [2.0, 1.0, 3.0]);
        assert_eq!(
            c.geometry().direction,
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        );
        // new (x, y) = old (1 - y, x)
        for x in 0..3 {
            for y in 0..2 {
                let old = (1 - y) + 2 * x;
                assert_eq!(*c.get(x, y, 0) as usize, old);
            }
        }
        assert_eq!(c.geometry().origin, [0.0, -1.0, 0.0]);
    }

    #[test]
    fn label_values_outside_declared_set_rejected() {
        let g = Geometry::new([2, 1, 1], [1.0; 3]).unwrap();
        let grid = VoxelGrid::from_vec(g.clone(), vec![0.0, 3.0]).unwrap();
        assert!(to_label_map(&grid, ANNOTATION_LABELS).is_err());
        let grid = VoxelGrid::from_vec(g, vec![0.0, 0.5]).unwrap();
        assert!(to_label_map(&grid, ANNOTATION_LABELS).is_err());
    }
}
