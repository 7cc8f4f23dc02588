use super::bow::{bow_encode, Codebook};
use super::fisher::{fisher_dim, fisher_vector};
use super::gmm::GmmModel;
use super::pca::{apply_pca, PcaModel};
use crate::error::{PfmError, Result};
use crate::persons::PersonTrack;
use crate::scalar::Real;
use crate::tracklets::DcsDescriptor;

/// Spatial grids on the person box, plus optional temporal cells and
/// subsequence windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidConfig {
    /// (rows, cols) per level.
    pub levels: Vec<(usize, usize)>,
    pub temporal_cells: usize,
    /// Optional (length, overlap) in frames for splitting a sequence into
    /// several samples.
    pub subsequence: Option<(usize, usize)>,
}

impl Default for PyramidConfig {
    /// Upper-body / lower-body halves.
    fn default() -> Self {
        PyramidConfig {
            levels: vec![(2, 1)],
            temporal_cells: 1,
            subsequence: None,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(PfmError::Config("pyramid needs at least one level".into()));
        }
        if self.levels.iter().any(|&(r, c)| r == 0 || c == 0) || self.temporal_cells == 0 {
            return Err(PfmError::Config(
                "pyramid cells must be at least 1x1x1".into(),
            ));
        }
        if let Some((len, overlap)) = self.subsequence {
            if len == 0 || overlap >= len {
                return Err(PfmError::Config(format!(
                    "subsequence overlap {overlap} must be below length {len}"
                )));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.levels.iter().map(|&(r, c)| r * c).sum::<usize>() * self.temporal_cells
    }
}

/// Frame windows `[start, end]` of the configured subsequence split over
/// `[first, last]`; the last window is shifted back to end at `last`.
pub fn subsequence_windows(
    first: usize,
    last: usize,
    len: usize,
    overlap: usize,
) -> Vec<(usize, usize)> {
    let span = last + 1 - first;
    if len == 0 || overlap >= len || span <= len {
        return vec![(first, last)];
    }
    let stride = len - overlap;
    let mut out = Vec::new();
    let mut s = first;
    loop {
        if s + len > last + 1 {
            let start = last + 1 - len;
            if out.last().is_none_or(|&(p, _)| p != start) {
                out.push((start, last));
            }
            break;
        }
        out.push((s, s + len - 1));
        if s + len == last + 1 {
            break;
        }
        s += stride;
    }
    out
}

/// Per-cell encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum Dictionary<T> {
    Fisher(GmmModel<T>),
    Bow(Codebook<T>),
}

impl<T: Real> Dictionary<T> {
    pub fn input_dim(&self) -> usize {
        match self {
            Dictionary::Fisher(g) => g.dim,
            Dictionary::Bow(c) => c.dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Dictionary::Fisher(g) => fisher_dim(g),
            Dictionary::Bow(c) => c.len(),
        }
    }

    /// Encodes one non-empty cell.
    pub fn encode(&self, descriptors: &[Vec<T>]) -> Result<Vec<T>> {
        match self {
            Dictionary::Fisher(g) => fisher_vector(descriptors, g),
            Dictionary::Bow(c) => bow_encode(descriptors, c),
        }
    }
}

/// Selection of descriptor subtypes: shape, div+curl, curl+shear, div+shear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubtypeMask(pub [bool; 4]);

impl Default for SubtypeMask {
    fn default() -> Self {
        SubtypeMask([true; 4])
    }
}

impl SubtypeMask {
    /// Parses a four-character string over `{0,1}`, e.g. `"1011"`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let s = s.strip_prefix("ft").unwrap_or(s);
        let bits: Vec<char> = s.chars().collect();
        if bits.len() != 4 || bits.iter().any(|&c| c != '0' && c != '1') {
            return Err(PfmError::Config(format!(
                "feature string {s:?} must be 4 binary digits"
            )));
        }
        let m = SubtypeMask(std::array::from_fn(|i| bits[i] == '1'));
        if !m.0.iter().any(|&b| b) {
            return Err(PfmError::Config("feature string selects no subtype".into()));
        }
        Ok(m)
    }

    /// Sizes of the selected blocks.
    pub fn split(&self, dims: [usize; 4]) -> Vec<usize> {
        (0..4).filter(|&i| self.0[i]).map(|i| dims[i]).collect()
    }

    pub fn select<T: Real>(&self, d: &DcsDescriptor<T>) -> Vec<T> {
        let dims = d.subtype_dims();
        let mut out = Vec::with_capacity(self.split(dims).iter().sum());
        let mut off = 0;
        for (i, &n) in dims.iter().enumerate() {
            if self.0[i] {
                out.extend_from_slice(&d.full[off..off + n]);
            }
            off += n;
        }
        out
    }
}

impl std::fmt::Display for SubtypeMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Subtype selection followed by optional low-level PCA.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LowLevelTransform<T> {
    pub mask: SubtypeMask,
    pub pca: Option<PcaModel<T>>,
}

impl<T: Real> LowLevelTransform<T> {
    pub fn apply(&self, d: &DcsDescriptor<T>) -> Result<Vec<T>> {
        let v = self.mask.select(d);
        match &self.pca {
            Some(p) => apply_pca(&v, p),
            None => Ok(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellLayout {
    pub level: usize,
    pub row: usize,
    pub col: usize,
    pub time: usize,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfmDescriptor<T> {
    pub vector: Vec<T>,
    pub layout: Vec<CellLayout>,
    pub subject_id: Option<String>,
    pub camera_id: Option<String>,
}

impl<T: Real> PfmDescriptor<T> {
    pub fn cell(&self, i: usize) -> &[T] {
        let c = &self.layout[i];
        &self.vector[c.offset..c.offset + c.len]
    }
}

fn cell_index<T: Real>(rel: T, n: usize) -> usize {
    let i = (rel * T::from_usize_lossy(n)).floor();
    if !(i > T::zero()) {
        0
    } else {
        i.to_usize().unwrap_or(n - 1).min(n - 1)
    }
}

/// Pyramid encoding of pre-transformed tracklet descriptors given as
/// `(vector, anchor, mid_frame)`.
pub fn pyramid_encode<T: Real>(
    items: &[(Vec<T>, (T, T), usize)],
    track: &PersonTrack<T>,
    dict: &Dictionary<T>,
    pyramid: &PyramidConfig,
) -> Result<PfmDescriptor<T>> {
    pyramid.validate()?;
    if items.is_empty() {
        return Err(PfmError::InvalidInput("no tracklets to encode".into()));
    }
    if track.is_empty() {
        return Err(PfmError::InvalidInput("person track has no boxes".into()));
    }
    let (first, last) = (track.first_frame(), track.last_frame());
    let span = T::from_usize_lossy(last + 1 - first);
    let tc = pyramid.temporal_cells;
    // relative position of every item inside its box, and its temporal cell
    let placed: Vec<(T, T, usize)> = items
        .iter()
        .map(|(_, (ax, ay), mid)| {
            let b = track.nearest_box(*mid).expect("non-empty track");
            let rx = (*ax - b.left()) / b.w;
            let ry = (*ay - b.top()) / b.h;
            let off = T::from_usize_lossy(mid.saturating_sub(first).min(last - first));
            (rx, ry, cell_index(off / span, tc))
        })
        .collect();
    let block = dict.output_dim();
    let mut vector = Vec::with_capacity(pyramid.cell_count() * block);
    let mut layout = Vec::with_capacity(pyramid.cell_count());
    for (level, &(rows, cols)) in pyramid.levels.iter().enumerate() {
        let mut cells: Vec<Vec<Vec<T>>> = vec![Vec::new(); rows * cols * tc];
        for ((v, _, _), &(rx, ry, t)) in items.iter().zip(&placed) {
            let (r, c) = (cell_index(ry, rows), cell_index(rx, cols));
            cells[(r * cols + c) * tc + t].push(v.clone());
        }
        for row in 0..rows {
            for col in 0..cols {
                for time in 0..tc {
                    let members = &cells[(row * cols + col) * tc + time];
                    let offset = vector.len();
                    if members.is_empty() {
                        vector.resize(offset + block, T::zero());
                    } else {
                        vector.extend(dict.encode(members)?);
                    }
                    layout.push(CellLayout {
                        level,
                        row,
                        col,
                        time,
                        offset,
                        len: block,
                    });
                }
            }
        }
    }
    Ok(PfmDescriptor {
        vector,
        layout,
        subject_id: None,
        camera_id: None,
    })
}

/// Pyramidal Fisher encoding of the tracklets of one person track.
pub fn pfm_encode<T: Real>(
    tracklets: &[(DcsDescriptor<T>, usize)],
    track: &PersonTrack<T>,
    gmm: &GmmModel<T>,
    pca_low: Option<&PcaModel<T>>,
    pyramid: &PyramidConfig,
) -> Result<PfmDescriptor<T>> {
    let low = LowLevelTransform {
        mask: SubtypeMask::default(),
        pca: pca_low.cloned(),
    };
    pfm_encode_with(
        tracklets,
        track,
        &Dictionary::Fisher(gmm.clone()),
        &low,
        pyramid,
    )
}

pub fn pfm_encode_with<T: Real>(
    tracklets: &[(DcsDescriptor<T>, usize)],
    track: &PersonTrack<T>,
    dict: &Dictionary<T>,
    low: &LowLevelTransform<T>,
    pyramid: &PyramidConfig,
) -> Result<PfmDescriptor<T>> {
    let items = tracklets
        .iter()
        .map(|(d, _)| Ok((low.apply(d)?, d.anchor, d.mid_frame)))
        .collect::<Result<Vec<_>>>()?;
    pyramid_encode(&items, track, dict, pyramid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persons::{BoundingBox, BoxKind};
    use crate::scalar::l2_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn track() -> PersonTrack<f64> {
        PersonTrack {
            boxes: (0..30)
                .map(|f| BoundingBox::new(50.0, 50.0, 20.0, 60.0, 1.0, BoxKind::FullBody, f))
                .collect(),
            track_id: 0,
            mean_color_hist: Vec::new(),
        }
    }

    fn gmm(d: usize) -> GmmModel<f64> {
        GmmModel {
            components: 2,
            dim: d,
            weights: vec![0.4, 0.6],
            means: (0..2 * d).map(|i| (i as f64 * 0.3).sin()).collect(),
            variances: vec![0.5; 2 * d],
        }
    }

    fn desc(rng: &mut ChaCha8Rng, d: usize, ay: f64, mid: usize) -> DcsDescriptor<f64> {
        DcsDescriptor {
            full: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            coords_dim: 1,
            block_dim: (d - 1) / 3,
            anchor: (rng.gen_range(41.0..59.0), ay),
            mid_frame: mid,
        }
    }

    #[test]
    fn single_cell_is_plain_fisher_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ts: Vec<_> = (0..6)
            .map(|i| (desc(&mut rng, 4, 40.0 + i as f64, 10), 0))
            .collect();
        let g = gmm(4);
        let p = PyramidConfig {
            levels: vec![(1, 1)],
            ..Default::default()
        };
        let pfm = pfm_encode(&ts, &track(), &g, None, &p).unwrap();
        let direct: Vec<Vec<f64>> = ts.iter().map(|(d, _)| d.full.clone()).collect();
        assert_eq!(pfm.vector, fisher_vector(&direct, &g).unwrap());
        assert_eq!(pfm.vector.len(), 16);
    }

    #[test]
    fn empty_lower_half_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // box spans y in [20, 80]; anchors in the upper half
        let ts: Vec<_> = (0..5)
            .map(|i| (desc(&mut rng, 4, 22.0 + 5.0 * i as f64, 5), 0))
            .collect();
        let pfm = pfm_encode(&ts, &track(), &gmm(4), None, &PyramidConfig::default()).unwrap();
        assert_eq!(pfm.layout.len(), 2);
        assert!((l2_norm(pfm.cell(0)) - 1.0).abs() < 1e-12);
        assert!(pfm.cell(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_levels_match_per_cell_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ts: Vec<_> = (0..20)
            .map(|_| {
                let y = rng.gen_range(21.0..79.0);
                (desc(&mut rng, 4, y, 7), 0)
            })
            .collect();
        let g = gmm(4);
        let p = PyramidConfig {
            levels: vec![(1, 1), (2, 1)],
            ..Default::default()
        };
        let pfm = pfm_encode(&ts, &track(), &g, None, &p).unwrap();
        let all: Vec<Vec<f64>> = ts.iter().map(|(d, _)| d.full.clone()).collect();
        let top: Vec<Vec<f64>> = ts
            .iter()
            .filter(|(d, _)| d.anchor.1 < 50.0)
            .map(|(d, _)| d.full.clone())
            .collect();
        let bottom: Vec<Vec<f64>> = ts
            .iter()
            .filter(|(d, _)| d.anchor.1 >= 50.0)
            .map(|(d, _)| d.full.clone())
            .collect();
        let mut want = fisher_vector(&all, &g).unwrap();
        want.extend(fisher_vector(&top, &g).unwrap());
        want.extend(fisher_vector(&bottom, &g).unwrap());
        assert_eq!(pfm.vector, want);
        assert_eq!(
            pfm.layout
                .iter()
                .map(|c| (c.level, c.row, c.col))
                .collect::<Vec<_>>(),
            vec![(0, 0, 0), (1, 0, 0), (1, 1, 0)]
        );
    }

    #[test]
    fn temporal_cells_split_by_mid_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts: Vec<_> = (0..4).map(|_| (desc(&mut rng, 4, 30.0, 3), 0)).collect();
        let p = PyramidConfig {
            levels: vec![(1, 1)],
            temporal_cells: 3,
            subsequence: None,
        };
        let pfm = pfm_encode(&ts, &track(), &gmm(4), None, &p).unwrap();
        assert!(pfm.cell(0).iter().any(|&v| v != 0.0));
        assert!(pfm.cell(1).iter().chain(pfm.cell(2)).all(|&v| v == 0.0));
    }

    #[test]
    fn no_tracklets_is_an_error() {
        assert!(pfm_encode(&[], &track(), &gmm(4), None, &PyramidConfig::default()).is_err());
    }

    #[test]
    fn subtype_masks() {
        let m = SubtypeMask::parse("ft1011").unwrap();
        assert_eq!(m.split([30, 96, 96, 96]), vec![30, 96, 96]);
        assert_eq!(m.to_string(), "1011");
        assert!(SubtypeMask::parse("0000").is_err());
        assert!(SubtypeMask::parse("10x1").is_err());
        let d = DcsDescriptor {
            full: (0..7).map(|i| i as f64).collect(),
            coords_dim: 1,
            block_dim: 2,
            anchor: (0.0, 0.0),
            mid_frame: 0,
        };
        assert_eq!(
            SubtypeMask::parse("0101").unwrap().select(&d),
            vec![1.0, 2.0, 5.0, 6.0]
        );
    }

    #[test]
    fn windows() {
        assert_eq!(subsequence_windows(0, 49, 100, 25), vec![(0, 49)]);
        assert_eq!(
            subsequence_windows(0, 199, 100, 25),
            vec![(0, 99), (75, 174), (100, 199)]
        );
        assert_eq!(
            subsequence_windows(10, 109, 50, 0),
            vec![(10, 59), (60, 109)]
        );
    }
}
