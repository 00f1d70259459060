use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkit::init::gaussian_vec;
use crate::nnkit::Matrix;
use crate::seed::stage_rng;

/// Widths of the four item feature blocks, in concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDims {
    pub description: usize,
    pub appearance: usize,
    pub feedback: usize,
    pub profile: usize,
}

impl Default for ActionDims {
    fn default() -> Self {
        ActionDims {
            description: 16,
            appearance: 16,
            feedback: 9,
            profile: 8,
        }
    }
}

impl ActionDims {
    pub fn total(&self) -> usize {
        self.description + self.appearance + self.feedback + self.profile
    }
}

/// Item record as it appears in a catalog file. Missing blocks are
/// synthesized deterministically from the item id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawItem {
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appearance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
}

/// Item representation `concat(description, appearance, feedback, profile)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionVector {
    dims: ActionDims,
    data: Vec<f64>,
}

impl ActionVector {
    pub fn dims(&self) -> ActionDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn description(&self) -> &[f64] {
        &self.data[..self.dims.description]
    }

    pub fn appearance(&self) -> &[f64] {
        let start = self.dims.description;
        &self.data[start..start + self.dims.appearance]
    }

    pub fn feedback(&self) -> &[f64] {
        let start = self.dims.description + self.dims.appearance;
        &self.data[start..start + self.dims.feedback]
    }

    pub fn profile(&self) -> &[f64] {
        &self.data[self.dims.total() - self.dims.profile..]
    }
}

/// Concatenates the four blocks of `raw`, checking each against `dims`.
pub fn build_action(raw: &RawItem, dims: ActionDims) -> Result<ActionVector> {
    let blocks = [
        ("description", &raw.description, dims.description),
        ("appearance", &raw.appearance, dims.appearance),
        ("feedback", &raw.feedback, dims.feedback),
        ("profile", &raw.profile, dims.profile),
    ];
    let mut data = Vec::with_capacity(dims.total());
    for (name, block, expected) in blocks {
        let got = block.as_ref().map_or(0, Vec::len);
        if got != expected {
            return Err(Error::Config(format!(
                "item {}: {name} block: expected dim {expected}, got {got}",
                raw.item_id
            )));
        }
        data.extend_from_slice(block.as_deref().unwrap_or_default());
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("item {}: non-finite feature {v}", raw.item_id)));
    }
    Ok(ActionVector { dims, data })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogItem {
    pub id: String,
    pub genre: usize,
    pub action: ActionVector,
}

/// The fixed item set; row `k` of [`Catalog::matrix`] is action `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    dims: ActionDims,
    n_genres: usize,
    items: Vec<CatalogItem>,
    matrix: Matrix,
}

pub fn item_id(index: usize) -> String {
    format!("item-{index:04}")
}

impl Catalog {
    pub fn new(items: Vec<CatalogItem>, dims: ActionDims, n_genres: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("catalog"));
        }
        let rows: Vec<Vec<f64>> = items.iter().map(|i| i.action.as_slice().to_vec()).collect();
        let matrix = Matrix::from_rows(&rows)?;
        Ok(Catalog {
            dims,
            n_genres,
            items,
            matrix,
        })
    }

    /// Catalog of `n_items` fully synthetic items.
    pub fn synthetic(n_items: usize, dims: ActionDims, n_genres: usize, seed: u64) -> Result<Self> {
        let raw: Vec<RawItem> = (0..n_items)
            .map(|k| RawItem {
                item_id: item_id(k),
                ..RawItem::default()
            })
            .collect();
        Catalog::from_raw(&raw, dims, n_genres, seed)
    }

    pub fn from_raw(raw: &[RawItem], dims: ActionDims, n_genres: usize, seed: u64) -> Result<Self> {
        if dims.profile < n_genres {
            return Err(Error::Config(format!(
                "profile block ({}) must hold the {n_genres} genre indicators",
                dims.profile
            )));
        }
        let items = raw
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let filled = synthesize_missing(r, k, dims, n_genres, seed);
                let genre = r.genre.unwrap_or_else(|| genre_from_profile(&filled, k, n_genres));
                if genre >= n_genres {
                    return Err(Error::Config(format!(
                        "item {}: genre {genre} >= {n_genres}",
                        r.item_id
                    )));
                }
                Ok(CatalogItem {
                    id: r.item_id.clone(),
                    genre,
                    action: build_action(&filled, dims)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Catalog::new(items, dims, n_genres)
    }

    pub fn load(path: &Path, dims: ActionDims, n_genres: usize, seed: u64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut raw = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: RawItem = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            raw.push(item);
        }
        Catalog::from_raw(&raw, dims, n_genres, seed)
    }

    /// Writes every item with all blocks explicit.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for item in &self.items {
            let a = &item.action;
            let raw = RawItem {
                item_id: item.id.clone(),
                genre: Some(item.genre),
                description: Some(a.description().to_vec()),
                appearance: Some(a.appearance().to_vec()),
                feedback: Some(a.feedback().to_vec()),
                profile: Some(a.profile().to_vec()),
            };
            let line = serde_json::to_string(&raw).expect("catalog rows serialize");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn dims(&self) -> ActionDims {
        self.dims
    }

    pub fn n_genres(&self) -> usize {
        self.n_genres
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[CatalogItem] {
        &self.items
    }

    pub fn item(&self, k: usize) -> &CatalogItem {
        &self.items[k]
    }

    pub fn genre(&self, k: usize) -> usize {
        self.items[k].genre
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.items
            .iter()
            .enumerate()
            .map(|(k, i)| (i.id.as_str(), k))
            .collect()
    }
}

fn genre_from_profile(raw: &RawItem, index: usize, n_genres: usize) -> usize {
    match &raw.profile {
        Some(p) if n_genres > 0 && p.len() >= n_genres => p[..n_genres]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (g, &v)| if v > best.1 { (g, v) } else { best })
            .0,
        _ => index % n_genres.max(1),
    }
}

fn synthesize_missing(raw: &RawItem, index: usize, dims: ActionDims, n_genres: usize, seed: u64) -> RawItem {
    let mut rng = stage_rng(seed, &format!("item/{}", raw.item_id));
    let genre = raw.genre.unwrap_or(index % n_genres.max(1));
    let description = gaussian_vec(dims.description, 0.5, &mut rng);
    let appearance = gaussian_vec(dims.appearance, 0.5, &mut rng);

    let popularity: f64 = rng.random_range(0.0..1.0);
    let mut feedback = vec![popularity, popularity * popularity, popularity.sqrt()];
    while feedback.len() < dims.feedback {
        let noise: f64 = gaussian_vec(1, 0.05, &mut rng)[0];
        feedback.push((popularity + noise).clamp(0.0, 1.0));
    }
    feedback.truncate(dims.feedback);

    let mut profile = vec![0.0; dims.profile];
    if genre < dims.profile {
        profile[genre] = 1.0;
    }
    let makers = dims.profile.saturating_sub(n_genres);
    if makers > 0 {
        let maker = rng.random_range(0..makers);
        profile[n_genres + maker] = 1.0;
    }

    RawItem {
        item_id: raw.item_id.clone(),
        genre: raw.genre,
        description: raw.description.clone().or(Some(description)),
        appearance: raw.appearance.clone().or(Some(appearance)),
        feedback: raw.feedback.clone().or(Some(feedback)),
        profile: raw.profile.clone().or(Some(profile)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_with(dims: [usize; 4]) -> RawItem {
        RawItem {
            item_id: "x".into(),
            genre: None,
            description: Some(vec![0.1; dims[0]]),
            appearance: Some(vec![0.2; dims[1]]),
            feedback: Some(vec![0.0; dims[2]]),
            profile: if dims[3] == 0 { None } else { Some(vec![0.4; dims[3]]) },
        }
    }

    #[test]
    fn default_blocks_concatenate_to_49() {
        let a = build_action(&raw_with([16, 16, 9, 8]), ActionDims::default()).unwrap();
        assert_eq!(a.dim(), 49);
        assert_eq!(a.description(), &[0.1; 16]);
        assert_eq!(a.feedback(), &[0.0; 9]);
        assert_eq!(a.profile(), &[0.4; 8]);
    }

    #[test]
    fn missing_profile_names_block() {
        let err = build_action(&raw_with([16, 16, 9, 0]), ActionDims::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("profile block: expected dim 8, got 0"), "{err}");
    }

    #[test]
    fn synthetic_catalog_is_deterministic_and_genre_coded() {
        let a = Catalog::synthetic(12, ActionDims::default(), 4, 5).unwrap();
        let b = Catalog::synthetic(12, ActionDims::default(), 4, 5).unwrap();
        assert_eq!(a, b);
        for (k, item) in a.items().iter().enumerate() {
            assert_eq!(item.genre, k % 4);
            assert_eq!(item.action.profile()[item.genre], 1.0);
        }
        assert_eq!(a.matrix().rows(), 12);
        assert_eq!(a.matrix().cols(), 49);
    }

    #[test]
    fn explicit_blocks_override_synthesis() {
        let mut raw = RawItem {
            item_id: "item-0000".into(),
            ..RawItem::default()
        };
        raw.description = Some(vec![1.0; 16]);
        let cat = Catalog::from_raw(&[raw], ActionDims::default(), 4, 1).unwrap();
        assert_eq!(cat.item(0).action.description(), &[1.0; 16]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.jsonl");
        let a = Catalog::synthetic(6, ActionDims::default(), 4, 9).unwrap();
        a.save(&path).unwrap();
        let b = Catalog::load(&path, ActionDims::default(), 4, 12345).unwrap();
        assert_eq!(a, b);
    }
}
