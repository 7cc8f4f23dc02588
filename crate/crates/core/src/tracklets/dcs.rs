use super::{Tracklet, TrackletParams};
use crate::error::{PfmError, Result};
use crate::flow::KinematicMaps;
use crate::scalar::{l2_normalize, Real};

/// Geometry of the trajectory-aligned histogram volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DcsLayout {
    /// Side N of the N x N pixel neighbourhood.
    pub volume: usize,
    pub spatial_cells: usize,
    pub temporal_cells: usize,
    pub bins: usize,
}

impl Default for DcsLayout {
    fn default() -> Self {
        DcsLayout {
            volume: 32,
            spatial_cells: 2,
            temporal_cells: 3,
            bins: 8,
        }
    }
}

impl DcsLayout {
    pub fn block_dim(&self) -> usize {
        self.spatial_cells * self.spatial_cells * self.temporal_cells * self.bins
    }
}

/// What the trajectory-shape block encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoordsMode {
    /// Step vectors divided by the summed step magnitude.
    #[default]
    Displacement,
    /// The first L positions divided by the frame size.
    FrameNormalized { width: usize, height: usize },
}

/// Per-tracklet descriptor: shape block followed by the div+curl,
/// curl+shear and div+shear orientation-histogram blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DcsDescriptor<T> {
    pub full: Vec<T>,
    pub coords_dim: usize,
    pub block_dim: usize,
    /// Mean tracklet position in full-resolution pixels.
    pub anchor: (T, T),
    pub mid_frame: usize,
}

impl<T: Real> DcsDescriptor<T> {
    pub fn coords(&self) -> &[T] {
        &self.full[..self.coords_dim]
    }

    fn block(&self, k: usize) -> &[T] {
        let s = self.coords_dim + k * self.block_dim;
        &self.full[s..s + self.block_dim]
    }

    pub fn div_curl(&self) -> &[T] {
        self.block(0)
    }

    pub fn curl_shear(&self) -> &[T] {
        self.block(1)
    }

    pub fn div_shear(&self) -> &[T] {
        self.block(2)
    }

    /// Sub-block sizes in order: shape, div+curl, curl+shear, div+shear.
    pub fn subtype_dims(&self) -> [usize; 4] {
        [
            self.coords_dim,
            self.block_dim,
            self.block_dim,
            self.block_dim,
        ]
    }
}

/// Orientation bin and magnitude of the three kinematic pairs at every pixel
/// of one frame: (div, curl), (curl, shear), (div, shear).
#[derive(Debug, Clone)]
pub struct OrientedPairs<T> {
    pub width: usize,
    pub height: usize,
    pub bins: [Vec<u8>; 3],
    pub mags: [Vec<T>; 3],
}

/// Bin of the direction of `(a, b)` among `n` equal sectors of `[0, 2pi)`.
pub(crate) fn orientation_bin<T: Real>(a: T, b: T, n: usize) -> usize {
    let two_pi = T::lit(std::f64::consts::TAU);
    let mut ang = b.atan2(a);
    if ang < T::zero() {
        ang = ang + two_pi;
    }
    let bin = (ang / two_pi * T::from_usize_lossy(n)).floor();
    bin.to_usize().unwrap_or(0).min(n - 1)
}

impl<T: Real> OrientedPairs<T> {
    pub fn from_maps(maps: &KinematicMaps<T>, bins: usize) -> Self {
        let n = maps.width * maps.height;
        let pairs = [
            (&maps.div, &maps.curl),
            (&maps.curl, &maps.shear),
            (&maps.div, &maps.shear),
        ];
        let mut out_bins: [Vec<u8>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
        let mut out_mags: [Vec<T>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
        for (k, (a, b)) in pairs.iter().enumerate() {
            for i in 0..n {
                out_bins[k].push(orientation_bin(a[i], b[i], bins) as u8);
                out_mags[k].push((a[i] * a[i] + b[i] * b[i]).sqrt());
            }
        }
        OrientedPairs {
            width: maps.width,
            height: maps.height,
            bins: out_bins,
            mags: out_mags,
        }
    }
}

fn coords_block<T: Real>(t: &Tracklet<T>, mode: CoordsMode, length: usize) -> Result<Vec<T>> {
    match mode {
        CoordsMode::Displacement => {
            let total = t.path_length();
            if !(total > T::zero()) {
                return Err(PfmError::Degenerate(
                    "tracklet has zero total displacement".into(),
                ));
            }
            Ok(t.steps()
                .flat_map(|(dx, dy)| [dx / total, dy / total])
                .collect())
        }
        CoordsMode::FrameNormalized { width, height } => {
            let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
            Ok(t.original_points()
                .into_iter()
                .take(length)
                .flat_map(|(x, y)| [x / w, y / h])
                .collect())
        }
    }
}

/// Descriptor of one tracklet given the oriented kinematic pairs of its L
/// flows: `fields[i]` belongs to the step from point `i` to point `i + 1`.
pub fn dcs_descriptor<T: Real>(
    t: &Tracklet<T>,
    fields: &[OrientedPairs<T>],
    params: &TrackletParams,
) -> Result<DcsDescriptor<T>> {
    let len = params.length;
    if t.points.len() != len + 1 {
        return Err(PfmError::dims(len + 1, t.points.len()));
    }
    if fields.len() < len {
        return Err(PfmError::dims(len, fields.len()));
    }
    let layout = params.layout;
    let coords = coords_block(t, params.coords_mode, len)?;
    let block_dim = layout.block_dim();
    let mut hist = vec![T::zero(); 3 * block_dim];
    let half = (layout.volume / 2) as isize;
    let cell_px = (layout.volume / layout.spatial_cells).max(1) as isize;
    let sc = layout.spatial_cells;
    for (i, f) in fields.iter().take(len).enumerate() {
        let tc = i * layout.temporal_cells / len;
        let (px, py) = t.points[i];
        let cx = px.round().to_isize().unwrap_or(0);
        let cy = py.round().to_isize().unwrap_or(0);
        for oy in -half..layout.volume as isize - half {
            let y = cy + oy;
            if y < 0 || y >= f.height as isize {
                continue;
            }
            let row = ((oy + half) / cell_px).min(sc as isize - 1) as usize;
            for ox in -half..layout.volume as isize - half {
                let x = cx + ox;
                if x < 0 || x >= f.width as isize {
                    continue;
                }
                let col = ((ox + half) / cell_px).min(sc as isize - 1) as usize;
                let pix = y as usize * f.width + x as usize;
                let cell = (tc * sc + row) * sc + col;
                for k in 0..3 {
                    let idx = k * block_dim + cell * layout.bins + f.bins[k][pix] as usize;
                    hist[idx] = hist[idx] + f.mags[k][pix];
                }
            }
        }
    }
    for block in hist.chunks_mut(block_dim) {
        l2_normalize(block);
    }
    let coords_dim = coords.len();
    let mut full = coords;
    full.extend(hist);
    let pts = t.original_points();
    let n = T::from_usize_lossy(pts.len());
    let anchor = pts
        .iter()
        .fold((T::zero(), T::zero()), |a, p| (a.0 + p.0, a.1 + p.1));
    Ok(DcsDescriptor {
        full,
        coords_dim,
        block_dim,
        anchor: (anchor.0 / n, anchor.1 / n),
        mid_frame: t.mid_frame(),
    })
}

/// Convenience wrapper computing the oriented pairs from kinematic maps.
pub fn dcs_descriptor_from_maps<T: Real>(
    t: &Tracklet<T>,
    kin: &[KinematicMaps<T>],
    params: &TrackletParams,
) -> Result<DcsDescriptor<T>> {
    let fields: Vec<_> = kin
        .iter()
        .take(params.length)
        .map(|m| OrientedPairs::from_maps(m, params.layout.bins))
        .collect();
    dcs_descriptor(t, &fields, params)
}
