//! Slice-wise tumor–vessel contact angles.
//!
//! On each slice the vessel is reduced to its largest 8-connected component.
//! Every boundary pixel of that component that has tumor in its 3×3
//! neighborhood contributes the angular extent, seen from the component
//! centroid, of the part of its outline the tumor touches: the pixel's whole
//! footprint when the pixel itself is tumor, the shared edge for an
//! edge-adjacent tumor pixel, and the shared corner for a diagonal one. The
//! contact angle is `360 − largest uncovered gap` of the union of these arcs.
//! Geometry is evaluated in physical units, so anisotropic pixels do not
//! skew the angles.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::grid::BinaryMask;
use crate::vascular::Plane;

/// How covered arcs are built from the contact pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMethod {
    /// Angular extent of the touched outline segments (default).
    #[default]
    Interface,
    /// Polar angles of contact pixel centres only.
    PixelGap,
}

/// Which vessel pixels of a slice form the vessel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentPolicy {
    /// Largest 8-connected component.
    #[default]
    Largest,
    /// All vessel pixels, one shared centroid.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContactOptions {
    #[serde(default)]
    pub method: ContactMethod,
    #[serde(default)]
    pub components: ComponentPolicy,
}

/// A 2-D binary image, `u` fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl SliceMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(EvalError::LengthMismatch(data.len(), width * height));
        }
        Ok(SliceMask {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        SliceMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[u + self.width * v]
    }

    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.data[u + self.width * v] = value;
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// In-plane axes `(u, v)` for slices normal to `plane`.
pub(crate) fn in_plane_axes(plane: Plane) -> (usize, usize) {
    match plane.axis() {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Extracts slice `index` normal to `plane`.
pub fn extract_slice(mask: &BinaryMask, plane: Plane, index: usize) -> SliceMask {
    let dims = mask.dims();
    let axis = plane.axis();
    let (ua, va) = in_plane_axes(plane);
    let (w, h) = (dims[ua], dims[va]);
    let mut data = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let mut c = [0usize; 3];
            c[axis] = index;
            c[ua] = u;
            c[va] = v;
            data.push(*mask.get(c[0], c[1], c[2]));
        }
    }
    SliceMask {
        width: w,
        height: h,
        data,
    }
}

/// Largest 8-connected component of a slice: centroid and boundary pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselSlice {
    /// Physical centroid `(u·su, v·sv)` in mm.
    pub centroid: [f64; 2],
    pub spacing: [f64; 2],
    /// Component pixels with at least one 4-neighbor outside the component.
    pub boundary: Vec<[usize; 2]>,
    pub size: usize,
}

const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
const NEIGHBORS_4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[inline]
fn offset(u: usize, v: usize, du: isize, dv: isize, w: usize, h: usize) -> Option<(usize, usize)> {
    let nu = u.checked_add_signed(du)?;
    let nv = v.checked_add_signed(dv)?;
    (nu < w && nv < h).then_some((nu, nv))
}

impl VesselSlice {
    /// `None` when the slice holds no vessel. Ties in component size go to
    /// the component found first in scan order.
    pub fn from_mask(vessel: &SliceMask, spacing: [f64; 2]) -> Option<Self> {
        Self::with_policy(vessel, spacing, ComponentPolicy::Largest)
    }

    pub fn with_policy(
        vessel: &SliceMask,
        spacing: [f64; 2],
        policy: ComponentPolicy,
    ) -> Option<Self> {
        let (w, h) = (vessel.width, vessel.height);
        let mut label = vec![0u32; w * h];
        let mut next = 0u32;
        let mut best: Option<(u32, Vec<usize>)> = None;
        let mut queue = VecDeque::new();
        for start in 0..w * h {
            if !vessel.data[start] || label[start] != 0 {
                continue;
            }
            next += 1;
            label[start] = next;
            queue.push_back(start);
            let mut members = Vec::new();
            while let Some(i) = queue.pop_front() {
                members.push(i);
                let (u, v) = (i % w, i / w);
                for &(du, dv) in &NEIGHBORS_8 {
                    if let Some((nu, nv)) = offset(u, v, du, dv, w, h) {
                        let j = nu + w * nv;
                        if vessel.data[j] && label[j] == 0 {
                            label[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
            if best.as_ref().is_none_or(|(_, m)| members.len() > m.len()) {
                best = Some((next, members));
            }
        }
        if policy == ComponentPolicy::All && next > 1 {
            label.iter_mut().filter(|l| **l != 0).for_each(|l| *l = 1);
            let all = (0..w * h).filter(|&i| vessel.data[i]).collect();
            best = Some((1, all));
        }
        let (id, members) = best?;
        let (mut cu, mut cv) = (0.0, 0.0);
        let mut boundary = Vec::new();
        for &i in &members {
            let (u, v) = (i % w, i / w);
            cu += u as f64;
            cv += v as f64;
            let inner = NEIGHBORS_4.iter().all(|&(du, dv)| {
                offset(u, v, du, dv, w, h).is_some_and(|(nu, nv)| label[nu + w * nv] == id)
            });
            if !inner {
                boundary.push([u, v]);
            }
        }
        let n = members.len() as f64;
        Some(VesselSlice {
            centroid: [cu / n * spacing[0], cv / n * spacing[1]],
            spacing,
            boundary,
            size: members.len(),
        })
    }

    fn angle_of(&self, u: f64, v: f64) -> f64 {
        let du = u * self.spacing[0] - self.centroid[0];
        let dv = v * self.spacing[1] - self.centroid[1];
        dv.atan2(du).to_degrees().rem_euclid(360.0)
    }

    /// Smallest arc covering the given outline points, as `(start, width)`.
    fn arc_of(&self, points: &[(f64, f64)]) -> (f64, f64) {
        let mut angles: Vec<f64> = points.iter().map(|&(u, v)| self.angle_of(u, v)).collect();
        angles.sort_by(f64::total_cmp);
        let mut gap = angles[0] + 360.0 - angles[angles.len() - 1];
        let mut start = angles[0];
        for pair in angles.windows(2) {
            if pair[1] - pair[0] > gap {
                gap = pair[1] - pair[0];
                start = pair[1];
            }
        }
        (start, 360.0 - gap)
    }

    fn footprint_contains_centroid(&self, u: usize, v: usize) -> bool {
        let cu = self.centroid[0] / self.spacing[0];
        let cv = self.centroid[1] / self.spacing[1];
        (cu - u as f64).abs() <= 0.5 && (cv - v as f64).abs() <= 0.5
    }

    /// Contact angle in degrees against a tumor given as a pixel predicate
    /// over the full slice of size `width × height`.
    pub fn contact_angle(
        &self,
        width: usize,
        height: usize,
        tumor: impl Fn(usize, usize) -> bool,
    ) -> f64 {
        self.contact_angle_with(ContactMethod::Interface, width, height, tumor)
    }

    pub fn contact_angle_with(
        &self,
        method: ContactMethod,
        width: usize,
        height: usize,
        tumor: impl Fn(usize, usize) -> bool,
    ) -> f64 {
        if method == ContactMethod::PixelGap {
            let arcs = self
                .boundary
                .iter()
                .filter(|&&[u, v]| {
                    tumor(u, v)
                        || NEIGHBORS_8.iter().any(|&(du, dv)| {
                            offset(u, v, du, dv, width, height)
                                .is_some_and(|(nu, nv)| tumor(nu, nv))
                        })
                })
                .map(|&[u, v]| (self.angle_of(u as f64, v as f64), 0.0))
                .collect();
            return covered_arc(arcs);
        }
        let mut arcs: Vec<(f64, f64)> = Vec::new();
        for &[u, v] in &self.boundary {
            let (fu, fv) = (u as f64, v as f64);
            if tumor(u, v) {
                if self.footprint_contains_centroid(u, v) {
                    return 360.0;
                }
                arcs.push(self.arc_of(&[
                    (fu - 0.5, fv - 0.5),
                    (fu + 0.5, fv - 0.5),
                    (fu - 0.5, fv + 0.5),
                    (fu + 0.5, fv + 0.5),
                ]));
            }
            for &(du, dv) in &NEIGHBORS_8 {
                let Some((nu, nv)) = offset(u, v, du, dv, width, height) else {
                    continue;
                };
                if !tumor(nu, nv) {
                    continue;
                }
                let (hu, hv) = (du as f64 / 2.0, dv as f64 / 2.0);
                if du != 0 && dv != 0 {
                    let a = self.angle_of(fu + hu, fv + hv);
                    arcs.push((a, 0.0));
                } else if du != 0 {
                    arcs.push(self.arc_of(&[(fu + hu, fv - 0.5), (fu + hu, fv + 0.5)]));
                } else {
                    arcs.push(self.arc_of(&[(fu - 0.5, fv + hv), (fu + 0.5, fv + hv)]));
                }
            }
        }
        covered_arc(arcs)
    }
}

/// `360 − largest gap` left by a set of arcs `(start, width)` on the circle;
/// 0 when there are no arcs.
pub(crate) fn covered_arc(mut arcs: Vec<(f64, f64)>) -> f64 {
    if arcs.is_empty() {
        return 0.0;
    }
    if arcs.iter().any(|&(_, w)| w >= 360.0) {
        return 360.0;
    }
    arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let first = arcs[0].0;
    // arcs wrapping past 360 already cover the region just after `first`
    let mut reach = arcs
        .iter()
        .map(|&(s, w)| s + w - 360.0)
        .fold(first + arcs[0].1, f64::max);
    let mut largest_gap: f64 = 0.0;
    for &(s, w) in &arcs[1..] {
        if s > reach {
            largest_gap = largest_gap.max(s - reach);
        }
        reach = reach.max(s + w);
    }
    if first + 360.0 > reach {
        largest_gap = largest_gap.max(first + 360.0 - reach);
    }
    (360.0 - largest_gap).clamp(0.0, 360.0)
}

/// Contact angle on a single slice pair with default options.
pub fn contact_angle_slice(
    tumor: &SliceMask,
    vessel: &SliceMask,
    pixel_spacing: [f64; 2],
) -> Result<f64> {
    contact_angle_slice_with(tumor, vessel, pixel_spacing, ContactOptions::default())
}

pub fn contact_angle_slice_with(
    tumor: &SliceMask,
    vessel: &SliceMask,
    pixel_spacing: [f64; 2],
    options: ContactOptions,
) -> Result<f64> {
    if tumor.width != vessel.width || tumor.height != vessel.height {
        return Err(EvalError::GeometryMismatch(format!(
            "slice shapes {}x{} vs {}x{}",
            tumor.width, tumor.height, vessel.width, vessel.height
        )));
    }
    if tumor.is_empty_mask() {
        return Ok(0.0);
    }
    Ok(
        VesselSlice::with_policy(vessel, pixel_spacing, options.components).map_or(0.0, |vs| {
            vs.contact_angle_with(options.method, tumor.width, tumor.height, |u, v| {
                tumor.get(u, v)
            })
        }),
    )
}

/// Per-slice vessel geometry along one plane, reusable across tumor masks.
#[derive(Debug, Clone)]
pub struct VesselProfile {
    pub plane: Plane,
    options: ContactOptions,
    dims: [usize; 3],
    slices: Vec<Option<VesselSlice>>,
    first_slice: usize,
}

impl VesselProfile {
    pub fn new(vessel: &BinaryMask, plane: Plane) -> Self {
        Self::with_options(vessel, plane, ContactOptions::default())
    }

    pub fn with_options(vessel: &BinaryMask, plane: Plane, options: ContactOptions) -> Self {
        let dims = vessel.dims();
        let axis = plane.axis();
        let (ua, va) = in_plane_axes(plane);
        let spacing = [vessel.spacing()[ua], vessel.spacing()[va]];
        let Some(bbox) = vessel.bounding_box() else {
            return VesselProfile {
                plane,
                options,
                dims,
                slices: Vec::new(),
                first_slice: 0,
            };
        };
        let slices = (bbox.lo[axis]..bbox.hi[axis])
            .map(|s| {
                VesselSlice::with_policy(
                    &extract_slice(vessel, plane, s),
                    spacing,
                    options.components,
                )
            })
            .collect();
        VesselProfile {
            plane,
            options,
            dims,
            slices,
            first_slice: bbox.lo[axis],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.slices.iter().all(Option::is_none)
    }

    /// Maximum slice-wise contact angle of `tumor`; 0 when nothing touches.
    pub fn max_contact_angle(&self, tumor: &BinaryMask) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let Some(tb) = tumor.bounding_box() else {
            return 0.0;
        };
        let axis = self.plane.axis();
        let (ua, va) = in_plane_axes(self.plane);
        let (w, h) = (self.dims[ua], self.dims[va]);
        // tumor one slice away cannot touch in-plane
        let lo = tb.lo[axis].max(self.first_slice);
        let hi = tb.hi[axis].min(self.first_slice + self.slices.len());
        let mut best: f64 = 0.0;
        for s in lo..hi {
            let Some(vs) = &self.slices[s - self.first_slice] else {
                continue;
            };
            let angle = vs.contact_angle_with(self.options.method, w, h, |u, v| {
                let mut c = [0usize; 3];
                c[axis] = s;
                c[ua] = u;
                c[va] = v;
                *tumor.get(c[0], c[1], c[2])
            });
            best = best.max(angle);
        }
        best
    }
}

/// Maximum contact angle over all slices normal to `plane`.
pub fn max_contact_angle(tumor: &BinaryMask, vessel: &BinaryMask, plane: Plane) -> Result<f64> {
    tumor.ensure_same_geometry(vessel)?;
    Ok(VesselProfile::new(vessel, plane).max_contact_angle(tumor))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Disk of radius `r` centred on pixel `(c, c)` plus an annular tumor
    /// sector `[start, start + arc)` of thickness 3 just outside it.
    pub(crate) fn disk_with_arc(n: usize, r: f64, start: f64, arc: f64) -> (SliceMask, SliceMask) {
        let c = (n / 2) as f64;
        let mut vessel = SliceMask::empty(n, n);
        let mut tumor = SliceMask::empty(n, n);
        for v in 0..n {
            for u in 0..n {
                let (du, dv) = (u as f64 - c, v as f64 - c);
                let d = du.hypot(dv);
                let rel = (dv.atan2(du).to_degrees() - start).rem_euclid(360.0);
                if d <= r {
                    vessel.set(u, v, true);
                } else if d <= r + 3.0 && (arc >= 360.0 || rel < arc) {
                    tumor.set(u, v, true);
                }
            }
        }
        (tumor, vessel)
    }

    #[test]
    fn no_contact_is_zero() {
        let (_, vessel) = disk_with_arc(40, 8.0, 0.0, 0.0);
        let mut tumor = SliceMask::empty(40, 40);
        tumor.set(1, 1, true);
        assert_eq!(
            contact_angle_slice(&tumor, &vessel, [1.0, 1.0]).unwrap(),
            0.0
        );
        assert_eq!(
            contact_angle_slice(&SliceMask::empty(40, 40), &vessel, [1.0, 1.0]).unwrap(),
            0.0
        );
        assert_eq!(
            contact_angle_slice(&tumor, &SliceMask::empty(40, 40), [1.0, 1.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn full_encasement() {
        let (tumor, vessel) = disk_with_arc(48, 10.0, 0.0, 360.0);
        let a = contact_angle_slice(&tumor, &vessel, [1.0, 1.0]).unwrap();
        assert!((a - 360.0).abs() <= 2.0, "{a}");
    }

    #[test]
    fn quarter_arc_radius_ten() {
        let (tumor, vessel) = disk_with_arc(48, 10.0, 30.0, 90.0);
        let a = contact_angle_slice(&tumor, &vessel, [1.0, 1.0]).unwrap();
        assert!((a - 90.0).abs() <= 5.0, "{a}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = SliceMask::empty(3, 3);
        let b = SliceMask::empty(3, 4);
        assert!(contact_angle_slice(&a, &b, [1.0, 1.0]).is_err());
    }

    #[test]
    fn largest_component_wins() {
        let (tumor, mut vessel) = disk_with_arc(48, 10.0, 0.0, 360.0);
        // a small separate vessel blob far from the tumor
        vessel.set(1, 1, true);
        vessel.set(2, 1, true);
        let vs = VesselSlice::from_mask(&vessel, [1.0, 1.0]).unwrap();
        assert!(vs.size > 300);
        let a = contact_angle_slice(&tumor, &vessel, [1.0, 1.0]).unwrap();
        assert!((a - 360.0).abs() <= 2.0);
    }

    #[test]
    fn pixel_gap_method_close_on_disks() {
        let opts = ContactOptions {
            method: ContactMethod::PixelGap,
            components: ComponentPolicy::Largest,
        };
        let (tumor, vessel) = disk_with_arc(48, 10.0, 30.0, 180.0);
        let a = contact_angle_slice_with(&tumor, &vessel, [1.0, 1.0], opts).unwrap();
        assert!((a - 180.0).abs() <= 15.0, "{a}");
    }

    #[test]
    fn all_components_policy_merges_blobs() {
        let mut vessel = SliceMask::empty(10, 10);
        vessel.set(2, 2, true);
        vessel.set(7, 7, true);
        let largest = VesselSlice::from_mask(&vessel, [1.0, 1.0]).unwrap();
        assert_eq!(largest.size, 1);
        let all = VesselSlice::with_policy(&vessel, [1.0, 1.0], ComponentPolicy::All).unwrap();
        assert_eq!(all.size, 2);
        assert_eq!(all.centroid, [4.5, 4.5]);
    }

    #[test]
    fn covered_arc_handles_wrap() {
        assert_eq!(covered_arc(vec![]), 0.0);
        assert!((covered_arc(vec![(350.0, 20.0)]) - 20.0).abs() < 1e-12);
        assert!((covered_arc(vec![(350.0, 20.0), (5.0, 20.0)]) - 35.0).abs() < 1e-12);
        assert!((covered_arc(vec![(0.0, 90.0), (180.0, 90.0)]) - 270.0).abs() < 1e-12);
        assert_eq!(covered_arc(vec![(10.0, 0.0)]), 0.0);
    }

    #[test]
    fn anisotropic_spacing_uses_physical_angles() {
        // contact on the +u side only; stretching v must not change a
        // symmetric arc centred on the u axis by more than discretization
        let (tumor, vessel) = disk_with_arc(48, 10.0, 315.0, 90.0);
        let iso = contact_angle_slice(&tumor, &vessel, [1.0, 1.0]).unwrap();
        let aniso = contact_angle_slice(&tumor, &vessel, [1.0, 2.0]).unwrap();
        // in physical space the same pixel set spans a wider arc
        assert!(aniso > iso);
    }
}
