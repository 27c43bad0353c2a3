use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use blan_autograd::Tensor;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::face::{render_identity, Nuisance, NuisanceConfig, SyntheticIdentity};
use super::makeup::{apply_makeup, MakeupParams};
use super::ppm::{read_image, write_image};
use crate::config::FOLDS;
use crate::error::{Error, Result};
use crate::seed::{self, label};

pub const MIN_IDENTITIES: usize = FOLDS;

/// Everything that determines a dataset's bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub identities: usize,
    pub seed: u64,
    pub size: usize,
    pub makeup_strength: f64,
    pub nuisance: NuisanceConfig,
}

impl DatasetSpec {
    pub fn new(identities: usize, seed: u64, size: usize) -> Self {
        DatasetSpec {
            identities,
            seed,
            size,
            makeup_strength: 1.0,
            nuisance: NuisanceConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.identities < MIN_IDENTITIES {
            return Err(Error::config(format!(
                "need at least {MIN_IDENTITIES} identities for {FOLDS}-fold splitting, got {}",
                self.identities
            )));
        }
        if self.size < 2 || self.size % 2 != 0 {
            return Err(Error::config(format!("image size {} must be even and >= 2", self.size)));
        }
        if !(self.makeup_strength >= 0.0 && self.makeup_strength <= 2.0) {
            return Err(Error::config(format!(
                "makeup strength {} outside [0, 2]",
                self.makeup_strength
            )));
        }
        Ok(())
    }
}

/// Nuisance of each side of a pair plus the cosmetics applied to the makeup side.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRecipe {
    pub makeup_view: Nuisance,
    pub clean_view: Nuisance,
    pub makeup: MakeupParams,
}

impl PairRecipe {
    pub fn for_identity(spec: &DatasetSpec, id: u32) -> Self {
        let mut rng = seed::rng(spec.seed, &[label::PAIR, id as u64]);
        let clean_view = Nuisance::sample(&spec.nuisance, &mut rng);
        let makeup_view = Nuisance::sample(&spec.nuisance, &mut rng);
        let makeup = MakeupParams::sample(spec.makeup_strength, spec.size, &mut rng);
        PairRecipe {
            makeup_view,
            clean_view,
            makeup,
        }
    }
}

/// A makeup image and a non-makeup image of the same identity.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    /// `[3, h, w]` with makeup.
    pub makeup: Tensor<f32>,
    /// `[3, h, w]` without makeup, from a different pose.
    pub clean: Tensor<f32>,
    pub id: u32,
    pub recipe: PairRecipe,
}

impl ImagePair {
    /// Both images flipped left to right.
    pub fn mirrored(&self) -> Self {
        ImagePair {
            makeup: mirror(&self.makeup),
            clean: mirror(&self.clean),
            id: self.id,
            recipe: self.recipe.clone(),
        }
    }
}

/// Flips the last axis of a `[.., h, w]` tensor.
pub fn mirror(image: &Tensor<f32>) -> Tensor<f32> {
    let w = *image.shape().last().expect("tensor has at least one axis");
    let mut out = image.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    out
}

/// Identity id → fold index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    folds: Vec<usize>,
}

impl FoldSplit {
    /// Shuffles ids 0..n and deals them round-robin into the folds.
    pub fn new(n: usize, seed: u64) -> Self {
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut seed::rng(seed, &[label::FOLDS]));
        let mut folds = vec![0; n];
        for (pos, id) in ids.into_iter().enumerate() {
            folds[id] = pos % FOLDS;
        }
        FoldSplit { folds }
    }

    pub fn from_assignments(folds: Vec<usize>) -> Result<Self> {
        if let Some(f) = folds.iter().find(|&&f| f >= FOLDS) {
            return Err(Error::Dataset(format!("fold index {f} outside 0..{FOLDS}")));
        }
        Ok(FoldSplit { folds })
    }

    pub fn fold_of(&self, id: u32) -> usize {
        self.folds[id as usize]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.folds
    }

    pub fn test_ids(&self, fold: usize) -> Vec<u32> {
        (0..self.folds.len() as u32).filter(|&i| self.fold_of(i) == fold).collect()
    }

    pub fn train_ids(&self, fold: usize) -> Vec<u32> {
        (0..self.folds.len() as u32).filter(|&i| self.fold_of(i) != fold).collect()
    }

    pub fn sizes(&self) -> [usize; FOLDS] {
        let mut s = [0; FOLDS];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    /// Indexed by identity id.
    pub pairs: Vec<ImagePair>,
    pub folds: FoldSplit,
}

/// Renders one pair per identity and attaches the fold split.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let geometry = seed::derive(spec.seed, &[label::IDENTITY]);
    let pairs = (0..spec.identities as u32)
        .into_par_iter()
        .map(|id| {
            let identity = SyntheticIdentity::generate(id, geometry);
            let recipe = PairRecipe::for_identity(spec, id);
            let clean = render_identity(&identity, &recipe.clean_view, spec.size).image;
            let view = render_identity(&identity, &recipe.makeup_view, spec.size);
            let makeup = apply_makeup(&view.image, &view.regions, &recipe.makeup);
            ImagePair {
                makeup,
                clean,
                id,
                recipe,
            }
        })
        .collect();
    Ok(Dataset {
        spec: spec.clone(),
        pairs,
        folds: FoldSplit::new(spec.identities, spec.seed),
    })
}

/// Clean renderings of a separate identity pool, `renderings` views each,
/// ordered by identity. Labels run 0..identities.
pub fn render_pool(
    seed: u64,
    identities: usize,
    renderings: usize,
    size: usize,
    nuisance: &NuisanceConfig,
) -> Vec<(Tensor<f32>, u32)> {
    let geometry = seed::derive(seed, &[label::EXTRACTOR_POOL, label::IDENTITY]);
    (0..identities as u32)
        .into_par_iter()
        .flat_map_iter(|id| {
            let identity = SyntheticIdentity::generate(id, geometry);
            let mut rng = seed::rng(seed, &[label::EXTRACTOR_POOL, id as u64]);
            (0..renderings)
                .map(|_| {
                    let n = Nuisance::sample(nuisance, &mut rng);
                    (render_identity(&identity, &n, size).image, id)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

impl Dataset {
    pub fn train_pairs(&self, fold: usize) -> Vec<&ImagePair> {
        self.folds.train_ids(fold).into_iter().map(|i| &self.pairs[i as usize]).collect()
    }

    pub fn test_pairs(&self, fold: usize) -> Vec<&ImagePair> {
        self.folds.test_ids(fold).into_iter().map(|i| &self.pairs[i as usize]).collect()
    }

    /// Writes `pairs/<id>_A.ppm`, `pairs/<id>_B.ppm`, `folds.csv` and `manifest.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let pairs = dir.join("pairs");
        fs::create_dir_all(&pairs).map_err(|e| Error::io(&pairs, e))?;
        for p in &self.pairs {
            write_image(&pairs.join(format!("{}_A.ppm", p.id)), &p.makeup)?;
            write_image(&pairs.join(format!("{}_B.ppm", p.id)), &p.clean)?;
        }
        let mut folds = String::from("id,fold\n");
        for (id, f) in self.folds.assignments().iter().enumerate() {
            writeln!(folds, "{id},{f}").unwrap();
        }
        let path = dir.join("folds.csv");
        fs::write(&path, folds).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("manifest.csv");
        fs::write(&path, manifest(&self.spec)).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Reads a directory written by [`Dataset::save`]. Images carry the PPM
    /// quantisation.
    pub fn load(dir: &Path) -> Result<Self> {
        let spec = parse_manifest(dir)?;
        let path = dir.join("folds.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut folds = vec![usize::MAX; spec.identities];
        for (n, line) in text.lines().enumerate().skip(1) {
            let bad = || Error::Dataset(format!("{}:{}: malformed row {line:?}", path.display(), n + 1));
            let (id, f) = line.split_once(',').ok_or_else(bad)?;
            let id: usize = id.trim().parse().map_err(|_| bad())?;
            let f: usize = f.trim().parse().map_err(|_| bad())?;
            *folds.get_mut(id).ok_or_else(bad)? = f;
        }
        if let Some(id) = folds.iter().position(|&f| f == usize::MAX) {
            return Err(Error::Dataset(format!("{}: identity {id} has no fold", path.display())));
        }
        let folds = FoldSplit::from_assignments(folds)?;
        let pairs = (0..spec.identities as u32)
            .map(|id| {
                let read = |side: &str| -> Result<Tensor<f32>> {
                    let p = dir.join("pairs").join(format!("{id}_{side}.ppm"));
                    let img = read_image(&p)?;
                    if img.shape() != [3, spec.size, spec.size] {
                        return Err(Error::Image {
                            path: p,
                            reason: format!(
                                "size {:?} does not match manifest size {}",
                                &img.shape()[1..],
                                spec.size
                            ),
                        });
                    }
                    Ok(img)
                };
                Ok(ImagePair {
                    makeup: read("A")?,
                    clean: read("B")?,
                    id,
                    recipe: PairRecipe::for_identity(&spec, id),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { spec, pairs, folds })
    }
}

fn manifest(spec: &DatasetSpec) -> String {
    format!(
        "key,value\nformat,1\nseed,{}\nsize,{}\nidentities,{}\nmakeup_strength,{}\nmax_shift_px,{}\nmax_rotation_deg,{}\nocclusion_prob,{}\n",
        spec.seed,
        spec.size,
        spec.identities,
        spec.makeup_strength,
        spec.nuisance.max_shift_px,
        spec.nuisance.max_rotation_deg,
        spec.nuisance.occlusion_prob
    )
}

fn parse_manifest(dir: &Path) -> Result<DatasetSpec> {
    let path = dir.join("manifest.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut spec = DatasetSpec::new(0, 0, 0);
    let mut seen = 0u32;
    for line in text.lines().skip(1) {
        let bad = || Error::Dataset(format!("{}: malformed entry {line:?}", path.display()));
        let (k, v) = line.split_once(',').ok_or_else(bad)?;
        let float = || v.parse::<f64>().map_err(|_| bad());
        let int = || v.parse::<u64>().map_err(|_| bad());
        match k {
            "format" if int()? == 1 => {}
            "seed" => spec.seed = int()?,
            "size" => spec.size = int()? as usize,
            "identities" => spec.identities = int()? as usize,
            "makeup_strength" => spec.makeup_strength = float()?,
            "max_shift_px" => spec.nuisance.max_shift_px = float()?,
            "max_rotation_deg" => spec.nuisance.max_rotation_deg = float()?,
            "occlusion_prob" => spec.nuisance.occlusion_prob = float()?,
            _ => return Err(bad()),
        }
        seen += 1;
    }
    if seen != 8 {
        return Err(Error::Dataset(format!("{}: expected 8 entries, found {seen}", path.display())));
    }
    spec.validate()?;
    Ok(spec)
}
