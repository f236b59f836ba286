use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jpeg::{quality_to_matrix, GridShift, QuantMatrix};

/// First-compression quality factors for donors and pristine images.
pub const QF_SET: [u8; 8] = [60, 65, 70, 75, 80, 85, 95, 98];
/// Background quality factors of tampered images.
pub const BACKGROUND_QFS: [u8; 4] = [75, 85, 95, 98];
/// Admissible box sides, in pixels.
pub const BOX_SIDES: [usize; 4] = [64, 96, 128, 156];
pub const DEFAULT_QF2: u8 = 90;
/// Boxes keep this many pixels clear of the top/left edge and
/// `MARGIN_TRAIL` of the bottom/right, so every box block has a tensor cell.
pub const MARGIN_LEAD: usize = 24;
pub const MARGIN_TRAIL: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TamperType {
    /// Background grid aligned with the second compression.
    I,
    /// Background grid misaligned.
    II,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeMode {
    #[default]
    DjpegVsDjpeg,
    /// Pasted regions are compressed once, by the final pass only.
    DjpegVsSjpeg,
}

/// A quality factor or an explicit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quality {
    Factor(u8),
    Matrix(QuantMatrix),
}

impl Quality {
    pub fn matrix(&self) -> Result<QuantMatrix> {
        match self {
            Quality::Factor(qf) => quality_to_matrix(*qf),
            Quality::Matrix(m) => Ok(m.clone()),
        }
    }
}

impl From<u8> for Quality {
    fn from(qf: u8) -> Self {
        Quality::Factor(qf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub h: usize,
    pub w: usize,
}

impl BoundingBox {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.top + self.h).contains(&y) && (self.left..self.left + self.w).contains(&x)
    }

    pub fn overlaps(&self, o: &BoundingBox) -> bool {
        self.top < o.top + o.h && o.top < self.top + self.h && self.left < o.left + o.w && o.left < self.left + self.w
    }
}

fn default_qf2() -> Quality {
    Quality::Factor(DEFAULT_QF2)
}

/// Everything needed to rebuild one forged sample from its sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgeRecipe {
    pub k: usize,
    #[serde(rename = "type")]
    pub tamper_type: TamperType,
    pub qf_background: Quality,
    #[serde(default)]
    pub qf_donors: Vec<Quality>,
    #[serde(default = "default_qf2")]
    pub qf2: Quality,
    #[serde(default)]
    pub boxes: Vec<BoundingBox>,
    /// Grid shift of every region's first compression; index 0 is the
    /// background.
    pub shifts: Vec<GridShift>,
    /// Top-left corner of the crop taken from each donor; defaults to the
    /// box origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_origins: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ForgeMode,
}

impl ForgeRecipe {
    /// Pristine recipe: one region, no boxes.
    pub fn pristine(qf: u8, tamper_type: TamperType, shift: GridShift, seed: u64) -> Self {
        Self {
            k: 1,
            tamper_type,
            qf_background: Quality::Factor(qf),
            qf_donors: Vec::new(),
            qf2: default_qf2(),
            boxes: Vec::new(),
            shifts: vec![shift],
            crop_origins: None,
            seed,
            mode: ForgeMode::DjpegVsDjpeg,
        }
    }

    pub fn crop_origin(&self, donor: usize) -> (usize, usize) {
        match &self.crop_origins {
            Some(o) => o[donor],
            None => (self.boxes[donor].top, self.boxes[donor].left),
        }
    }

    /// Misalignment between region `r`'s first grid and the final grid, as
    /// seen in the composite.
    pub fn effective_shift(&self, r: usize) -> GridShift {
        if r == 0 {
            return self.shifts[0];
        }
        let (oy, ox) = self.crop_origin(r - 1);
        let b = self.boxes[r - 1];
        let s = self.shifts[r];
        let wrap = |s: usize, at: usize, from: usize| ((s + at + 64 * 8 - from % (64 * 8)) % 8) as u8;
        GridShift::new(wrap(s.r(), b.top, oy), wrap(s.c(), b.left, ox)).expect("reduced mod 8")
    }

    /// Chooses crop origins so every pasted region's first grid lands on the
    /// final grid (aligned double compression inside the boxes).
    pub fn align_donor_grids(&mut self) {
        let origins = self
            .boxes
            .iter()
            .zip(&self.shifts[1..])
            .map(|(b, s)| {
                let fit = |at: usize, s: usize| {
                    if s == 0 {
                        at
                    } else if at >= 8 - s {
                        at - (8 - s)
                    } else {
                        at + s
                    }
                };
                (fit(b.top, s.r()), fit(b.left, s.c()))
            })
            .collect();
        self.crop_origins = Some(origins);
    }

    /// First-compression matrix of each region, background first.
    pub fn region_matrices(&self) -> Result<Vec<QuantMatrix>> {
        std::iter::once(&self.qf_background)
            .chain(&self.qf_donors)
            .map(Quality::matrix)
            .collect()
    }

    /// Checks the recipe against an image of `rows` x `cols`.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        let k = self.k;
        if !(1..=4).contains(&k) {
            return Err(Error::invalid(format!("k = {k} outside 1..=4")));
        }
        if self.qf_donors.len() != k - 1 || self.boxes.len() != k - 1 {
            return Err(Error::invalid(format!(
                "k = {k} needs {} donor qualities and boxes, got {} and {}",
                k - 1,
                self.qf_donors.len(),
                self.boxes.len()
            )));
        }
        if self.shifts.len() != k {
            return Err(Error::invalid(format!(
                "k = {k} needs {k} shifts, got {}",
                self.shifts.len()
            )));
        }
        if let Some(o) = &self.crop_origins {
            if o.len() != k - 1 {
                return Err(Error::invalid(format!("{} crop origins for {} donors", o.len(), k - 1)));
            }
        }
        let mats = self.region_matrices()?;
        self.qf2.matrix()?;
        for i in 0..k {
            for j in 0..i {
                if mats[i].same_steps(&mats[j]) {
                    return Err(Error::invalid(format!(
                        "regions {j} and {i} share a first-compression matrix"
                    )));
                }
            }
        }
        match self.tamper_type {
            TamperType::I if !self.shifts[0].is_aligned() => {
                return Err(Error::invalid("type I background must be aligned"));
            }
            TamperType::II if self.shifts[0].is_aligned() => {
                return Err(Error::invalid("type II background must be misaligned"));
            }
            _ => {}
        }
        for (i, b) in self.boxes.iter().enumerate() {
            let r = i + 1;
            if b.h == 0 || b.w == 0 || b.top + b.h > rows || b.left + b.w > cols {
                return Err(Error::invalid(format!(
                    "region {r}: box {}x{} at ({},{}) outside {rows}x{cols}",
                    b.h, b.w, b.top, b.left
                )));
            }
            if self.mode == ForgeMode::DjpegVsDjpeg && self.shifts[r].is_aligned() {
                return Err(Error::invalid(format!("region {r}: foreground shift must be non-zero")));
            }
            for (j, o) in self.boxes[..i].iter().enumerate() {
                if b.overlaps(o) {
                    return Err(Error::invalid(format!("region {r} overlaps region {}", j + 1)));
                }
            }
        }
        Ok(())
    }
}

fn nonzero_shift(rng: &mut ChaCha8Rng) -> GridShift {
    loop {
        let (r, c) = (rng.gen_range(0..8u8), rng.gen_range(0..8u8));
        if (r, c) != (0, 0) {
            return GridShift::new(r, c).expect("in range");
        }
    }
}

/// Constraints for drawing recipes; unset fields follow the dataset rules.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingRule {
    pub k: usize,
    #[serde(rename = "type")]
    pub tamper_type: Option<TamperType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qf_background: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qf_donors: Option<Vec<u8>>,
    /// Square boxes of this side instead of random sides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ForgeMode>,
    /// Crop donors so pasted grids land on the final grid.
    #[serde(default)]
    pub align_donor_grids: bool,
    /// Redraw until every pair of region step vectors (15-prefix) is at
    /// least this far apart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<f64>,
}

impl SamplingRule {
    pub fn new(k: usize, tamper_type: TamperType) -> Self {
        Self {
            k,
            tamper_type: Some(tamper_type),
            ..Self::default()
        }
    }

    /// Draws a recipe for an image of `rows` x `cols`. Retries use seeds
    /// derived from `seed`; the recipe records the seed that succeeded.
    pub fn sample(&self, seed: u64, rows: usize, cols: usize) -> Result<ForgeRecipe> {
        let k = self.k;
        if !(1..=4).contains(&k) {
            return Err(Error::invalid(format!("k = {k} outside 1..=4")));
        }
        if let Some(d) = &self.qf_donors {
            if d.len() != k - 1 {
                return Err(Error::invalid(format!("{} donor factors for k = {k}", d.len())));
            }
        }
        let mut last = None;
        for attempt in 0..256u64 {
            let s = if attempt == 0 {
                seed
            } else {
                seed ^ attempt.wrapping_mul(0xD1B5_4A32_D192_ED03)
            };
            match self.draw(s, rows, cols) {
                Ok(r) => {
                    let sep_ok = self
                        .min_separation
                        .map_or(Ok(true), |m| min_separation(&r).map(|d| d >= m))?;
                    if sep_ok {
                        return Ok(r);
                    }
                    last = Some(Error::invalid(format!(
                        "no draw reaches step separation {:?}",
                        self.min_separation
                    )));
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn draw(&self, seed: u64, rows: usize, cols: usize) -> Result<ForgeRecipe> {
        let (k, tamper_type) = (self.k, self.tamper_type.unwrap_or(TamperType::I));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg_shift = match tamper_type {
            TamperType::I => GridShift::ALIGNED,
            TamperType::II => nonzero_shift(&mut rng),
        };
        let pick = |rng: &mut ChaCha8Rng, set: &[u8]| *set.choose(rng).expect("non-empty");
        if k == 1 {
            let qf = self.qf_background.unwrap_or_else(|| pick(&mut rng, &QF_SET));
            let mut r = ForgeRecipe::pristine(qf, tamper_type, bg_shift, seed);
            r.mode = self.mode.unwrap_or_default();
            return Ok(r);
        }
        let qf_bg = self.qf_background.unwrap_or_else(|| pick(&mut rng, &BACKGROUND_QFS));
        let donors: Vec<u8> = match &self.qf_donors {
            Some(d) => d.clone(),
            None => {
                let pool: Vec<u8> = QF_SET.iter().copied().filter(|&q| q != qf_bg).collect();
                pool.choose_multiple(&mut rng, k - 1).copied().collect()
            }
        };

        let (y_max, x_max) = (rows.saturating_sub(MARGIN_TRAIL), cols.saturating_sub(MARGIN_TRAIL));
        let mut boxes: Vec<BoundingBox> = Vec::with_capacity(k - 1);
        let mut attempts = 0;
        while boxes.len() < k - 1 {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::invalid(format!("cannot place {} boxes in {rows}x{cols}", k - 1)));
            }
            let h = self
                .box_side
                .unwrap_or_else(|| *BOX_SIDES.choose(&mut rng).expect("non-empty"));
            let w = self
                .box_side
                .unwrap_or_else(|| *BOX_SIDES.choose(&mut rng).expect("non-empty"));
            if MARGIN_LEAD + h > y_max || MARGIN_LEAD + w > x_max {
                if self.box_side.is_some() {
                    return Err(Error::invalid(format!("box side {h} does not fit in {rows}x{cols}")));
                }
                continue;
            }
            let b = BoundingBox {
                top: rng.gen_range(MARGIN_LEAD..=y_max - h),
                left: rng.gen_range(MARGIN_LEAD..=x_max - w),
                h,
                w,
            };
            if boxes.iter().all(|o| !o.overlaps(&b)) {
                boxes.push(b);
            }
        }
        let mut shifts = vec![bg_shift];
        shifts.extend((1..k).map(|_| nonzero_shift(&mut rng)));
        let mut r = ForgeRecipe {
            k,
            tamper_type,
            qf_background: Quality::Factor(qf_bg),
            qf_donors: donors.into_iter().map(Quality::Factor).collect(),
            qf2: default_qf2(),
            boxes,
            shifts,
            crop_origins: None,
            seed,
            mode: self.mode.unwrap_or_default(),
        };
        if self.align_donor_grids {
            r.align_donor_grids();
        }
        r.validate(rows, cols)?;
        Ok(r)
    }
}

/// Smallest L2 distance between the 15-step zig-zag prefixes of any two
/// regions; infinite for a single region.
pub fn min_separation(r: &ForgeRecipe) -> Result<f64> {
    let v: Vec<Vec<f64>> = r.region_matrices()?.iter().map(|m| m.zigzag_prefix(15)).collect();
    let mut best = f64::INFINITY;
    for i in 0..v.len() {
        for j in 0..i {
            let d = v[i].iter().zip(&v[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    Ok(best)
}

/// Draws a recipe for an image of `rows` x `cols` following the dataset
/// rules: pristine images take any QF of the set, tampered backgrounds one
/// of the four high factors, donors distinct factors from the set. Boxes are
/// placed by rejection inside the tensor-covered interior.
pub fn sample_recipe(seed: u64, k: usize, tamper_type: TamperType, rows: usize, cols: usize) -> Result<ForgeRecipe> {
    SamplingRule::new(k, tamper_type).sample(seed, rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_draws_from_full_set() {
        for seed in 0..50 {
            let r = sample_recipe(seed, 1, TamperType::I, 256, 256).unwrap();
            let Quality::Factor(qf) = r.qf_background else { panic!() };
            assert!(QF_SET.contains(&qf));
            assert!(r.boxes.is_empty() && r.shifts == vec![GridShift::ALIGNED]);
            r.validate(256, 256).unwrap();
        }
    }

    #[test]
    fn k4_rules() {
        for seed in 0..50 {
            let r = sample_recipe(seed, 4, TamperType::II, 512, 512).unwrap();
            let Quality::Factor(bg) = r.qf_background else { panic!() };
            assert!(BACKGROUND_QFS.contains(&bg));
            assert_eq!(r.qf_donors.len(), 3);
            assert!(!r.shifts[0].is_aligned());
            r.validate(512, 512).unwrap();
            for b in &r.boxes {
                assert!(BOX_SIDES.contains(&b.h) && BOX_SIDES.contains(&b.w));
                assert!(b.top >= MARGIN_LEAD && b.top + b.h + MARGIN_TRAIL <= 512);
            }
        }
    }

    #[test]
    fn same_seed_same_recipe() {
        let a = sample_recipe(9, 3, TamperType::I, 384, 384).unwrap();
        assert_eq!(a, sample_recipe(9, 3, TamperType::I, 384, 384).unwrap());
        assert_ne!(a, sample_recipe(10, 3, TamperType::I, 384, 384).unwrap());
    }

    #[test]
    fn duplicate_donor_rejected() {
        let mut r = sample_recipe(1, 3, TamperType::I, 384, 384).unwrap();
        r.qf_donors[1] = r.qf_donors[0].clone();
        let e = r.validate(384, 384).unwrap_err().to_string();
        assert!(e.contains("regions 1 and 2"), "{e}");
    }

    #[test]
    fn bad_box_names_region() {
        let mut r = sample_recipe(1, 3, TamperType::I, 384, 384).unwrap();
        r.boxes[1].top = 380;
        let e = r.validate(384, 384).unwrap_err().to_string();
        assert!(e.contains("region 2"), "{e}");
    }

    #[test]
    fn type_constraints() {
        let mut r = sample_recipe(2, 2, TamperType::I, 256, 256).unwrap();
        r.shifts[0] = GridShift::new(1, 0).unwrap();
        assert!(r.validate(256, 256).is_err());
        r.tamper_type = TamperType::II;
        r.validate(256, 256).unwrap();
        r.shifts[1] = GridShift::ALIGNED;
        assert!(r.validate(256, 256).is_err());
    }

    #[test]
    fn aligned_crops_cancel_shift() {
        for seed in 0..40 {
            let mut r = sample_recipe(seed, 4, TamperType::I, 512, 512).unwrap();
            r.align_donor_grids();
            for reg in 1..4 {
                assert!(r.effective_shift(reg).is_aligned());
                let (oy, ox) = r.crop_origin(reg - 1);
                let b = r.boxes[reg - 1];
                assert!(oy + b.h <= 512 && ox + b.w <= 512);
            }
        }
    }

    #[test]
    fn default_crop_keeps_shift() {
        let r = sample_recipe(5, 2, TamperType::I, 256, 256).unwrap();
        assert_eq!(r.effective_shift(1), r.shifts[1]);
    }

    #[test]
    fn rule_overrides_and_separation() {
        let rule = SamplingRule {
            qf_background: Some(95),
            qf_donors: Some(vec![65]),
            box_side: Some(128),
            align_donor_grids: true,
            ..SamplingRule::new(2, TamperType::I)
        };
        for seed in 0..20 {
            let r = rule.sample(seed, 384, 384).unwrap();
            assert_eq!(r.qf_background, Quality::Factor(95));
            assert_eq!((r.boxes[0].h, r.boxes[0].w), (128, 128));
            assert!(r.effective_shift(1).is_aligned());
        }
        let sep = SamplingRule {
            min_separation: Some(5.0),
            ..SamplingRule::new(4, TamperType::II)
        };
        for seed in 0..20 {
            assert!(min_separation(&sep.sample(seed, 512, 512).unwrap()).unwrap() >= 5.0);
        }
        let dup = SamplingRule {
            qf_background: Some(95),
            qf_donors: Some(vec![95]),
            ..SamplingRule::new(2, TamperType::I)
        };
        assert!(dup.sample(0, 256, 256).is_err());
    }

    #[test]
    fn separation_of_known_pair() {
        let r = ForgeRecipe {
            qf_donors: vec![Quality::Factor(95)],
            ..sample_recipe(0, 2, TamperType::I, 256, 256).unwrap()
        };
        let r = ForgeRecipe {
            qf_background: Quality::Factor(98),
            ..r
        };
        let a = quality_to_matrix(95).unwrap().zigzag_prefix(15);
        let b = quality_to_matrix(98).unwrap().zigzag_prefix(15);
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert_eq!(min_separation(&r).unwrap(), d);
    }

    #[test]
    fn json_round_trip() {
        let mut r = sample_recipe(3, 3, TamperType::II, 384, 384).unwrap();
        r.qf_donors[0] = Quality::Matrix(quality_to_matrix(70).unwrap());
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"type\":\"II\""));
        let back: ForgeRecipe = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
