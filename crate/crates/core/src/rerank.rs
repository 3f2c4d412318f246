//! Staged retrieval: rank the database by global distance, re-rank the top
//! `N1` by a structural score, then the top `N2` by the fused score.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::cmap::{CorrespondenceMap, Mask};
use crate::error::{Error, Result};
use crate::features::GlobalDescriptor;
use crate::formats::{load_image, read_gdsc, write_gdsc};
use crate::image::Image;
use crate::matcher::{match_prepared, MatchConfig, PreparedImage, WORKING_SIZE};
use crate::pyramid::{compute_global_descriptor, DescriptorConfig};
use crate::rng::stream;
use crate::verify::{
    hypercolumns, score_G, score_S_L, score_pair_S, s_f_inverted, Variant, VariantInputs, VerifyConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Shortlist re-ranked by the structural score.
    pub n1: usize,
    /// Head re-ranked by the fused score.
    pub n2: usize,
    pub descriptor: DescriptorConfig,
    pub matching: MatchConfig,
    pub verify: VerifyConfig,
    /// Stage-1 ordering; must not need hypercolumns.
    pub stage1_variant: String,
    pub stage2_variant: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n1: 100,
            n2: 20,
            descriptor: DescriptorConfig::default(),
            matching: MatchConfig::default(),
            verify: VerifyConfig::default(),
            stage1_variant: "S".into(),
            stage2_variant: "log_S_L_S*Q_pow10".into(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n2 > self.n1 {
            return Err(Error::Config(format!("n2 ({}) exceeds n1 ({})", self.n2, self.n1)));
        }
        self.descriptor.validate()?;
        self.matching.validate()?;
        self.verify.validate()?;
        if Variant::parse(&self.stage1_variant)?.needs_local() {
            return Err(Error::Config(format!(
                "stage-1 variant `{}` needs local similarity",
                self.stage1_variant
            )));
        }
        Variant::parse(&self.stage2_variant)?;
        Ok(())
    }
}

/// Read access to database images by id.
pub trait ImageStore: Sync {
    fn load(&self, id: &str) -> Result<Image>;
}

impl ImageStore for BTreeMap<String, Image> {
    fn load(&self, id: &str) -> Result<Image> {
        self.get(id)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("unknown image id `{id}`")))
    }
}

impl ImageStore for crate::synth::Benchmark {
    fn load(&self, id: &str) -> Result<Image> {
        self.database_image(id)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("unknown image id `{id}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub descriptor: GlobalDescriptor,
    pub image_path: PathBuf,
}

/// Global descriptors of a database, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    entries: Vec<IndexEntry>,
    pub descriptor_config: DescriptorConfig,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    image_path: PathBuf,
    descriptor_file: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexManifest {
    version: u32,
    config_hash: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    created_unix: u64,
    descriptor: DescriptorConfig,
    entries: Vec<ManifestEntry>,
}

fn creation_time() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
        })
}

fn config_hash(cfg: &DescriptorConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

/// Global descriptor of an image as the index computes it.
pub fn describe(image: &Image, cfg: &DescriptorConfig) -> Result<GlobalDescriptor> {
    compute_global_descriptor(&PreparedImage::new(image, cfg)?.pyramid)
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("pgm" | "ppm" | "pnm")
    )
}

impl Index {
    /// Index in-memory images given as `(id, image, path)`.
    pub fn from_images(items: Vec<(String, Image, PathBuf)>, cfg: &DescriptorConfig) -> Result<Index> {
        cfg.validate()?;
        if items.is_empty() {
            return Err(Error::InvalidInput("no images to index".into()));
        }
        let mut entries: Vec<IndexEntry> = items
            .into_par_iter()
            .map(|(id, img, path)| {
                Ok(IndexEntry {
                    descriptor: describe(&img, cfg)?,
                    id,
                    image_path: path,
                })
            })
            .collect::<Result<_>>()?;
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidInput(format!("duplicate image id `{}`", w[0].id)));
        }
        Ok(Index {
            entries,
            descriptor_config: cfg.clone(),
            config_hash: config_hash(cfg),
        })
    }

    /// Index every PGM/PPM file in `dir` (ids are file stems). Unreadable
    /// files are skipped with a warning.
    pub fn build(dir: impl AsRef<Path>, cfg: &DescriptorConfig) -> Result<Index> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        paths.sort();
        let items: Vec<(String, Image, PathBuf)> = paths
            .into_par_iter()
            .filter_map(|p| match load_image(&p) {
                Ok(img) => {
                    let id = p.file_stem()?.to_string_lossy().into_owned();
                    Some((id, img, p))
                }
                Err(e) => {
                    warn!("skipping {}: {e}", p.display());
                    None
                }
            })
            .collect();
        if items.is_empty() {
            return Err(Error::InvalidInput(format!("no readable images in {}", dir.display())));
        }
        Index::from_images(items, cfg)
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        let i = self.entries.binary_search_by(|e| e.id.as_str().cmp(id)).ok()?;
        Some(&self.entries[i])
    }

    /// Copy with every descriptor perturbed by Gaussian noise of standard
    /// deviation `sigma` per component and renormalized. Each entry's noise
    /// depends only on `seed` and its position in id order.
    pub fn with_descriptor_noise(&self, sigma: f64, seed: u64) -> Result<Index> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
        let mut out = self.clone();
        for (i, e) in out.entries.iter_mut().enumerate() {
            let mut rng = stream(seed, "descriptor-noise", i as u64);
            let noisy: Vec<f32> = e
                .descriptor
                .values()
                .iter()
                .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32)
                .collect();
            e.descriptor = GlobalDescriptor::from_unnormalized(noisy)?;
        }
        Ok(out)
    }

    /// Write `manifest.json` and `descriptors/<id>.gdsc` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let ddir = dir.join("descriptors");
        std::fs::create_dir_all(&ddir).map_err(|e| Error::io(&ddir, e))?;
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let file = format!("descriptors/{}.gdsc", e.id);
            write_gdsc(&e.descriptor, dir.join(&file))?;
            entries.push(ManifestEntry {
                id: e.id.clone(),
                image_path: e.image_path.clone(),
                descriptor_file: file,
            });
        }
        let manifest = IndexManifest {
            version: 1,
            config_hash: self.config_hash.clone(),
            created_unix: creation_time(),
            descriptor: self.descriptor_config.clone(),
            entries,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Index> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: IndexManifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.config_hash != config_hash(&m.descriptor) {
            return Err(Error::Config("index manifest hash does not match its descriptor config".into()));
        }
        let entries = m
            .entries
            .into_iter()
            .map(|e| {
                Ok(IndexEntry {
                    descriptor: read_gdsc(dir.join(&e.descriptor_file))?,
                    id: e.id,
                    image_path: e.image_path,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if entries.is_empty() {
            return Err(Error::InvalidInput("index has no entries".into()));
        }
        Ok(Index {
            entries,
            descriptor_config: m.descriptor,
            config_hash: m.config_hash,
        })
    }
}

impl ImageStore for Index {
    fn load(&self, id: &str) -> Result<Image> {
        let e = self
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown image id `{id}`")))?;
        load_image(&e.image_path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Global,
    S,
    SF,
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedItem {
    pub id: String,
    /// Stage score: `G` for the global stage, the variant value otherwise.
    #[serde(serialize_with = "finite_or_null")]
    pub score: f64,
    #[serde(rename = "G")]
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub stage: Stage,
    pub items: Vec<RankedItem>,
}

impl RankedList {
    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.id.clone()).collect()
    }
}

/// Whole database by ascending `G`, ties by id.
pub fn rank_global(query: &GlobalDescriptor, index: &Index) -> Result<RankedList> {
    if index.is_empty() {
        return Err(Error::InvalidInput("empty index".into()));
    }
    let mut items = index
        .entries()
        .iter()
        .map(|e| {
            let g = score_G(query, &e.descriptor)?;
            Ok(RankedItem {
                id: e.id.clone(),
                score: g,
                g,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    items.sort_by(|a, b| a.g.total_cmp(&b.g).then_with(|| a.id.cmp(&b.id)));
    Ok(RankedList {
        stage: Stage::Global,
        items,
    })
}

/// Descending score, then ascending `G`, then id.
fn sort_head(items: &mut [RankedItem]) {
    items.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.g.total_cmp(&b.g))
            .then_with(|| a.id.cmp(&b.id))
    });
}

/// Stage-1 evidence for one candidate, reusable by later stages and variants.
#[derive(Debug, Clone)]
pub struct Evidence {
    pub id: String,
    pub g: f64,
    pub s: f64,
    pub s_a: f64,
    pub s_b: f64,
    pub inliers: usize,
    pub consistent: usize,
    /// `O_AB` with the query as A, on the candidate's working grid.
    pub ab: CorrespondenceMap,
    /// Cyclic mask of `ab`.
    pub cyclic: Mask,
}

impl Evidence {
    fn failed(id: String, g: f64) -> Evidence {
        Evidence {
            id,
            g,
            s: 0.0,
            s_a: 0.0,
            s_b: 0.0,
            inliers: 0,
            consistent: 0,
            ab: CorrespondenceMap::invalid(WORKING_SIZE, WORKING_SIZE),
            cyclic: Mask::new(WORKING_SIZE, WORKING_SIZE),
        }
    }

    pub fn inputs(&self, s_l: f64) -> VariantInputs {
        VariantInputs {
            inliers: self.inliers,
            consistent: self.consistent,
            s: self.s,
            s_l,
            g: self.g,
        }
    }
}

/// Match and verify the query against one candidate.
pub fn gather_evidence(
    query: &PreparedImage,
    id: &str,
    g: f64,
    store: &dyn ImageStore,
    config: &PipelineConfig,
) -> Result<Evidence> {
    let image = store.load(id)?;
    let cand = PreparedImage::new(&image, &config.descriptor)?;
    let dense = match_prepared(query, &cand, &config.matching)?;
    let st = score_pair_S(&dense.ab, &dense.ba, &config.verify)?;
    let best = st.best();
    Ok(Evidence {
        id: id.to_string(),
        g,
        s: st.s,
        s_a: st.s_a,
        s_b: st.s_b,
        inliers: best.inlier_count(),
        consistent: best.consistent_count(),
        cyclic: st.forward.cyclic.clone(),
        ab: dense.ab,
    })
}

/// Evidence for the first `min(n, |list|)` entries; a failing pair is logged
/// and scored 0.
pub fn collect_evidence(
    query: &PreparedImage,
    list: &RankedList,
    n: usize,
    store: &dyn ImageStore,
    config: &PipelineConfig,
) -> Vec<Evidence> {
    list.items[..n.min(list.items.len())]
        .par_iter()
        .map(|it| {
            gather_evidence(query, &it.id, it.g, store, config).unwrap_or_else(|e| {
                warn!("verification of `{}` failed: {e}", it.id);
                Evidence::failed(it.id.clone(), it.g)
            })
        })
        .collect()
}

/// Reorder the first `evidence.len()` entries of `list` by `variant`.
pub fn reorder_by_variant(list: &RankedList, evidence: &[Evidence], variant: &Variant, stage: Stage) -> RankedList {
    let by_id: BTreeMap<&str, &Evidence> = evidence.iter().map(|e| (e.id.as_str(), e)).collect();
    let n = evidence.len().min(list.items.len());
    let mut items = list.items.clone();
    for it in &mut items[..n] {
        let e = by_id[it.id.as_str()];
        it.score = variant.eval(&e.inputs(0.0));
    }
    sort_head(&mut items[..n]);
    // the frozen tail keeps its order but is unscored at this stage (null in JSON)
    for it in &mut items[n..] {
        it.score = f64::NAN;
    }
    RankedList { stage, items }
}

/// Stage 1: structural re-ranking of the first `N1` entries.
pub fn rerank_stage1(
    query: &PreparedImage,
    global: &RankedList,
    store: &dyn ImageStore,
    config: &PipelineConfig,
) -> Result<(RankedList, Vec<Evidence>)> {
    let variant = Variant::parse(&config.stage1_variant)?;
    let evidence = collect_evidence(query, global, config.n1, store, config);
    Ok((reorder_by_variant(global, &evidence, &variant, Stage::S), evidence))
}

/// Per-candidate stage-2 quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct LocalScore {
    pub id: String,
    pub S_L: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub score: f64,
    pub inverted_regime: bool,
}

/// Stage 2: fused re-ranking of the first `N2` entries of the stage-1 list.
pub fn rerank_stage2(
    query: &PreparedImage,
    stage1: &RankedList,
    evidence: &[Evidence],
    store: &dyn ImageStore,
    config: &PipelineConfig,
) -> Result<(RankedList, Vec<LocalScore>)> {
    let variant = Variant::parse(&config.stage2_variant)?;
    let n = config.n2.min(stage1.items.len());
    let mut items = stage1.items.clone();
    if n == 0 {
        return Ok((
            RankedList {
                stage: Stage::SF,
                items,
            },
            Vec::new(),
        ));
    }
    let by_id: BTreeMap<&str, &Evidence> = evidence.iter().map(|e| (e.id.as_str(), e)).collect();
    let hq = hypercolumns(query, &config.verify)?;
    let a_dims = (query.image.height(), query.image.width());
    let locals: Vec<LocalScore> = items[..n]
        .par_iter()
        .map(|it| {
            let e = by_id
                .get(it.id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("no stage-1 evidence for `{}`", it.id)))?;
            let s_l = if e.cyclic.count() == 0 {
                0.0
            } else {
                let cand = PreparedImage::new(&store.load(&it.id)?, &config.descriptor)?;
                let hc = hypercolumns(&cand, &config.verify)?;
                score_S_L(&hq, &hc, &e.ab, a_dims, &e.cyclic)?
            };
            Ok(LocalScore {
                id: it.id.clone(),
                S_L: s_l,
                score: variant.eval(&e.inputs(s_l)),
                inverted_regime: s_f_inverted(s_l, e.s),
            })
        })
        .collect::<Result<_>>()?;
    for (it, l) in items[..n].iter_mut().zip(&locals) {
        it.score = l.score;
    }
    sort_head(&mut items[..n]);
    for it in &mut items[n..] {
        it.score = f64::NAN;
    }
    Ok((
        RankedList {
            stage: Stage::SF,
            items,
        },
        locals,
    ))
}

/// Structural scores reported per candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct StructuralScore {
    pub id: String,
    pub G: f64,
    pub S: f64,
    pub S_A: f64,
    pub S_B: f64,
    pub inliers: usize,
    pub consistent: usize,
}

/// All three stage rankings for one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub query: String,
    pub global: RankedList,
    pub stage1: RankedList,
    pub stage2: RankedList,
    pub structural: Vec<StructuralScore>,
    pub local: Vec<LocalScore>,
}

/// Run all stages for one query image.
pub fn run_query(
    query_id: &str,
    query_image: &Image,
    index: &Index,
    store: &dyn ImageStore,
    config: &PipelineConfig,
) -> Result<QueryResult> {
    config.validate()?;
    let q = PreparedImage::new(query_image, &config.descriptor)?;
    let g = compute_global_descriptor(&q.pyramid)?;
    let global = rank_global(&g, index)?;
    let (stage1, evidence) = rerank_stage1(&q, &global, store, config)?;
    let (stage2, local) = rerank_stage2(&q, &stage1, &evidence, store, config)?;
    let mut structural: Vec<StructuralScore> = evidence
        .iter()
        .map(|e| StructuralScore {
            id: e.id.clone(),
            G: e.g,
            S: e.s,
            S_A: e.s_a,
            S_B: e.s_b,
            inliers: e.inliers,
            consistent: e.consistent,
        })
        .collect();
    structural.sort_by(|a, b| a.id.cmp(&b.id));
    let mut local = local;
    local.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(QueryResult {
        query: query_id.to_string(),
        global,
        stage1,
        stage2,
        structural,
        local,
    })
}
