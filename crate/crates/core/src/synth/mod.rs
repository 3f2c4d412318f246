//! Synthetic warps with analytic ground truth, and retrieval benchmarks built
//! from them.

mod procedural;
mod warp;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use procedural::{noise_image, photometric_jitter, textured_image};
pub use warp::{
    apply_warp, ground_truth, random_warp, warp_image, Warp, WarpKind, WarpParams, WarpSpec, WarpedPair,
    MAX_WARP_ATTEMPTS,
};

use crate::error::{Error, Result};
use crate::formats::{save_image, write_cmap};
use crate::image::{resize_image, Image};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Photometric {
    /// Uniform brightness offset bound.
    pub brightness: f32,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    /// Side of the square benchmark images.
    pub size: usize,
    /// Warp kinds drawn from uniformly per warped image.
    pub kinds: Vec<WarpKind>,
    pub magnitude: f64,
    pub n_queries: usize,
    pub positives_per_query: usize,
    pub n_distractors: usize,
    pub seed: u64,
    pub photometric: Option<Photometric>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            size: 240,
            kinds: WarpKind::ALL.to_vec(),
            magnitude: 0.3,
            n_queries: 10,
            positives_per_query: 5,
            n_distractors: 50,
            seed: 0,
            photometric: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("at least one warp kind is required".into()));
        }
        if !(0.0..=1.0).contains(&self.magnitude) {
            return Err(Error::Config(format!("magnitude {} outside [0, 1]", self.magnitude)));
        }
        if self.size < crate::image::MIN_SIDE {
            return Err(Error::Config(format!("size {} is too small", self.size)));
        }
        if self.n_queries == 0 {
            return Err(Error::Config("n_queries must be >= 1".into()));
        }
        if let Some(p) = self.photometric {
            if !(p.brightness >= 0.0 && p.brightness <= 0.1 && p.noise_sigma >= 0.0 && p.noise_sigma <= 0.02) {
                return Err(Error::Config("photometric jitter out of range (brightness ≤ 0.1, sigma ≤ 0.02)".into()));
            }
        }
        Ok(())
    }

    pub fn sources_needed(&self) -> usize {
        self.n_queries + self.n_distractors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEntry {
    pub id: String,
    /// Index into the source list.
    pub source: usize,
    pub warp: WarpSpec,
    pub positives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseEntry {
    pub id: String,
    pub source: usize,
    /// `None` for untouched distractors.
    pub warp: Option<WarpSpec>,
    /// Query this image is a positive for.
    pub query: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub config: BenchmarkConfig,
    pub queries: Vec<QueryEntry>,
    /// Sorted by id.
    pub database: Vec<DatabaseEntry>,
    pub distractors: Vec<String>,
}

impl BenchmarkManifest {
    /// Query id → ids of its relevant database images.
    pub fn relevance(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.queries
            .iter()
            .map(|q| (q.id.clone(), q.positives.iter().cloned().collect()))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Generated images held in memory; ground truth is recomputed from the
/// warp specs on demand.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub manifest: BenchmarkManifest,
    /// In manifest order.
    pub queries: Vec<Image>,
    /// In manifest order.
    pub database: Vec<Image>,
}

impl Benchmark {
    pub fn query(&self, id: &str) -> Option<&Image> {
        let i = self.manifest.queries.iter().position(|q| q.id == id)?;
        Some(&self.queries[i])
    }

    pub fn database_image(&self, id: &str) -> Option<&Image> {
        let i = self.manifest.database.binary_search_by(|e| e.id.as_str().cmp(id)).ok()?;
        Some(&self.database[i])
    }
}

/// `n` procedural source images of `size × size`.
pub fn procedural_sources(n: usize, size: usize, seed: u64) -> Vec<Image> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| textured_image(size, size, derive_seed(seed, "source", i)))
        .collect()
}

fn warped_view(
    source: &Image,
    config: &BenchmarkConfig,
    label: &str,
    index: u64,
) -> Result<(Image, WarpSpec)> {
    let seed = derive_seed(config.seed, label, index);
    let kind = config.kinds[(derive_seed(seed, "kind", 0) % config.kinds.len() as u64) as usize];
    let warp = random_warp(kind, config.magnitude, seed, (config.size, config.size))?;
    let mut image = warp_image(source, &warp);
    if let Some(p) = config.photometric {
        use rand::Rng;
        let mut rng = stream(seed, "brightness", 0);
        let b = if p.brightness > 0.0 {
            rng.gen_range(-p.brightness..=p.brightness)
        } else {
            0.0
        };
        image = photometric_jitter(&image, b, p.noise_sigma, seed);
    }
    Ok((image, warp.spec().clone()))
}

/// Build a retrieval benchmark.
///
/// Source `q < n_queries` yields query `q` (one warp) and its positives
/// (independent warps) in the database; the next `n_distractors` sources go
/// into the database untouched. Database ids are assigned in a seeded
/// shuffled order so relevance cannot be read off the ids.
pub fn gen_benchmark(sources: &[Image], config: &BenchmarkConfig) -> Result<Benchmark> {
    config.validate()?;
    let needed = config.sources_needed();
    if sources.len() < needed {
        return Err(Error::InsufficientSources {
            needed,
            available: sources.len(),
        });
    }
    let sources: Vec<Image> = sources[..needed]
        .par_iter()
        .map(|s| {
            let g = s.to_gray();
            if g.height() == config.size && g.width() == config.size {
                Ok(g)
            } else {
                resize_image(&g, config.size, config.size)
            }
        })
        .collect::<Result<_>>()?;

    let (nq, pp, nd) = (config.n_queries, config.positives_per_query, config.n_distractors);
    let n_db = nq * pp + nd;
    let mut order: Vec<usize> = (0..n_db).collect();
    order.shuffle(&mut stream(config.seed, "db-ids", 0));
    let db_id = |slot: usize| format!("db{:05}", order[slot]);

    let queries: Vec<(Image, WarpSpec)> = (0..nq)
        .into_par_iter()
        .map(|q| warped_view(&sources[q], config, "query", q as u64))
        .collect::<Result<_>>()?;
    let positives: Vec<(Image, WarpSpec)> = (0..nq * pp)
        .into_par_iter()
        .map(|k| warped_view(&sources[k / pp.max(1)], config, "positive", k as u64))
        .collect::<Result<_>>()?;

    let mut db: Vec<(DatabaseEntry, Image)> = Vec::with_capacity(n_db);
    for (k, (img, spec)) in positives.into_iter().enumerate() {
        let q = k / pp;
        db.push((
            DatabaseEntry {
                id: db_id(k),
                source: q,
                warp: Some(spec),
                query: Some(format!("q{q:04}")),
            },
            img,
        ));
    }
    let mut distractors = Vec::with_capacity(nd);
    for d in 0..nd {
        let id = db_id(nq * pp + d);
        distractors.push(id.clone());
        db.push((
            DatabaseEntry {
                id,
                source: nq + d,
                warp: None,
                query: None,
            },
            sources[nq + d].clone(),
        ));
    }
    distractors.sort();
    db.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let mut query_entries = Vec::with_capacity(nq);
    let mut query_images = Vec::with_capacity(nq);
    for (q, (img, spec)) in queries.into_iter().enumerate() {
        let id = format!("q{q:04}");
        let mut pos: Vec<String> = db
            .iter()
            .filter(|(e, _)| e.query.as_deref() == Some(id.as_str()))
            .map(|(e, _)| e.id.clone())
            .collect();
        pos.sort();
        query_entries.push(QueryEntry {
            id,
            source: q,
            warp: spec,
            positives: pos,
        });
        query_images.push(img);
    }
    let (entries, images): (Vec<_>, Vec<_>) = db.into_iter().unzip();
    Ok(Benchmark {
        manifest: BenchmarkManifest {
            config: config.clone(),
            queries: query_entries,
            database: entries,
            distractors,
        },
        queries: query_images,
        database: images,
    })
}

/// Write `manifest.json`, `images/{queries,database}/*.pgm` and, when
/// `with_gt`, `gt/<id>_fwd.cmap` / `gt/<id>_bwd.cmap` for every warped image
/// relative to its source.
pub fn write_benchmark(bench: &Benchmark, dir: impl AsRef<Path>, with_gt: bool) -> Result<()> {
    let dir = dir.as_ref();
    let qdir = dir.join("images").join("queries");
    let ddir = dir.join("images").join("database");
    for d in [&qdir, &ddir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let m = &bench.manifest;
    m.queries
        .par_iter()
        .zip(&bench.queries)
        .try_for_each(|(q, img)| save_image(img, qdir.join(format!("{}.pgm", q.id))))?;
    m.database
        .par_iter()
        .zip(&bench.database)
        .try_for_each(|(e, img)| save_image(img, ddir.join(format!("{}.pgm", e.id))))?;
    if with_gt {
        let gdir = dir.join("gt");
        std::fs::create_dir_all(&gdir).map_err(|e| Error::io(&gdir, e))?;
        let warps: Vec<(&str, &WarpSpec)> = m
            .queries
            .iter()
            .map(|q| (q.id.as_str(), &q.warp))
            .chain(m.database.iter().filter_map(|e| e.warp.as_ref().map(|w| (e.id.as_str(), w))))
            .collect();
        warps.par_iter().try_for_each(|(id, spec)| {
            let warp = Warp::new((*spec).clone())?;
            let (fwd, bwd) = ground_truth(&warp, m.config.size, m.config.size);
            write_cmap(&fwd, gdir.join(format!("{id}_fwd.cmap")))?;
            write_cmap(&bwd, gdir.join(format!("{id}_bwd.cmap")))
        })?;
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
