//! Entity-error-based refinement of transient-object masks.
//!
//! Small entities that overlap a (dilated) transient mask get added to the
//! mask when their mean photometric error is high and removed when it is
//! low. Large entities and large mask components sit out: the former are
//! discarded entirely, the latter keep their pixels but do not recruit
//! entities.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::img::{LabelMap, Mask, ScalarMap};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct EntityStats<T: Real> {
    pub entity_id: u32,
    pub area: usize,
    pub mean_error: T,
}

#[derive(Debug, Clone)]
pub struct RefineParams {
    /// Percentage of entities kept (smallest by area); the rest discarded.
    pub rho1_pct: f64,
    /// Percentage of mask components kept for recruiting entities.
    pub rho2_pct: f64,
    /// Square structuring-element radius for the dilation step.
    pub dilation_px: u32,
    /// When set, components filtered by rho2 are also deleted from the
    /// output base instead of only being excluded from candidacy.
    pub drop_large_components_from_base: bool,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            rho1_pct: 70.0,
            rho2_pct: 80.0,
            dilation_px: 3,
            drop_large_components_from_base: false,
        }
    }
}

/// Per-entity mean error over a label map (label 0 ignored). Returned in
/// ascending id order.
pub fn entity_error<T: Real>(err_map: &ScalarMap<T>, entity_map: &LabelMap) -> Vec<EntityStats<T>> {
    assert_eq!(err_map.width, entity_map.width);
    assert_eq!(err_map.height, entity_map.height);
    let mut acc: BTreeMap<u32, (usize, T)> = BTreeMap::new();
    for (i, &label) in entity_map.data.iter().enumerate() {
        if label == 0 {
            continue;
        }
        let e = acc.entry(label).or_insert((0, T::zero()));
        e.0 += 1;
        e.1 += err_map.data[i];
    }
    acc.into_iter()
        .map(|(entity_id, (area, sum))| EntityStats {
            entity_id,
            area,
            mean_error: sum / T::from_usize(area).unwrap(),
        })
        .collect()
}

/// Photometric threshold: mean - std/2 over the given entities (population
/// standard deviation). "Slightly below the mean" keeps moderately
/// high-error entities in.
pub fn pho_threshold<T: Real>(stats: &[EntityStats<T>]) -> Result<T> {
    if stats.is_empty() {
        return Err(Error::InvalidArg("no entities for pho threshold".into()));
    }
    let n = T::from_usize(stats.len()).unwrap();
    let mean = stats.iter().fold(T::zero(), |s, e| s + e.mean_error) / n;
    let var = stats
        .iter()
        .fold(T::zero(), |s, e| s + (e.mean_error - mean) * (e.mean_error - mean))
        / n;
    Ok(mean - var.sqrt() / T::lit(2.0))
}

/// Area threshold keeping `pct` percent of the values (the smallest ones).
/// Returns None when everything is kept. Values >= the threshold are
/// discarded, so boundary ties fall on the discard side.
fn area_threshold(areas: &[usize], pct: f64) -> Option<usize> {
    if areas.is_empty() {
        return None;
    }
    let mut sorted = areas.to_vec();
    sorted.sort_unstable();
    let keep = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    if keep >= sorted.len() {
        None
    } else {
        Some(sorted[keep])
    }
}

/// 8-connected components of a binary mask; returns (labels, component
/// areas). Component ids start at 1 in scan order.
pub fn connected_components(mask: &Mask) -> (LabelMap, Vec<usize>) {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut labels = LabelMap::new(mask.width, mask.height);
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    let mut next = 1u32;
    for start in 0..mask.data.len() {
        if !mask.data[start] || labels.data[start] != 0 {
            continue;
        }
        let mut area = 0usize;
        stack.push(start);
        labels.data[start] = next;
        while let Some(idx) = stack.pop() {
            area += 1;
            let (x, y) = ((idx as i64) % w, (idx as i64) / w);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let nidx = (ny * w + nx) as usize;
                    if mask.data[nidx] && labels.data[nidx] == 0 {
                        labels.data[nidx] = next;
                        stack.push(nidx);
                    }
                }
            }
        }
        areas.push(area);
        next += 1;
    }
    (labels, areas)
}

/// Dilate by a square structuring element of the given radius (Chebyshev
/// distance <= radius).
pub fn dilate(mask: &Mask, radius: u32) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width as i64, mask.height as i64);
    let r = radius as i64;
    let mut out = Mask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            if !mask.data[(y * w + x) as usize] {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        out.data[(ny * w + nx) as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Refine a transient mask against an entity map and error map.
pub fn refine_masks<T: Real>(
    sam: &Mask,
    entity_map: &LabelMap,
    err_map: &ScalarMap<T>,
    params: &RefineParams,
) -> Mask {
    let stats = entity_error(err_map, entity_map);
    let rho_pho = pho_threshold(&stats).ok();
    refine_masks_with_threshold(sam, entity_map, &stats, rho_pho, params)
}

/// Refinement with an explicit photometric threshold (None skips all
/// candidates, leaving the base mask unchanged).
pub fn refine_masks_with_threshold<T: Real>(
    sam: &Mask,
    entity_map: &LabelMap,
    stats: &[EntityStats<T>],
    rho_pho: Option<T>,
    params: &RefineParams,
) -> Mask {
    assert_eq!(sam.width, entity_map.width);
    assert_eq!(sam.height, entity_map.height);

    // Entity area filter (rho1): keep small entities.
    let entity_areas: Vec<usize> = stats.iter().map(|s| s.area).collect();
    let rho1 = area_threshold(&entity_areas, params.rho1_pct);
    let surviving: Vec<&EntityStats<T>> = stats
        .iter()
        .filter(|s| rho1.map_or(true, |t| s.area < t))
        .collect();

    // Mask component filter (rho2): large components keep their pixels but
    // do not recruit entities.
    let (component_labels, component_areas) = connected_components(sam);
    let rho2 = area_threshold(&component_areas, params.rho2_pct);
    let component_kept: Vec<bool> = component_areas
        .iter()
        .map(|&a| rho2.map_or(true, |t| a < t))
        .collect();
    let mut survivor_mask = Mask::new(sam.width, sam.height);
    for i in 0..sam.data.len() {
        let label = component_labels.data[i];
        if label != 0 && component_kept[(label - 1) as usize] {
            survivor_mask.data[i] = true;
        }
    }

    let mut output = if params.drop_large_components_from_base {
        survivor_mask.clone()
    } else {
        sam.clone()
    };

    let Some(rho_pho) = rho_pho else {
        return output;
    };
    if surviving.is_empty() {
        return output;
    }

    let dilated = dilate(&survivor_mask, params.dilation_px);

    // Candidate entities overlap the dilated survivor mask by >= 1 pixel.
    let mut overlapping: BTreeMap<u32, bool> = BTreeMap::new();
    for i in 0..dilated.data.len() {
        if dilated.data[i] && entity_map.data[i] != 0 {
            overlapping.insert(entity_map.data[i], true);
        }
    }

    for entity in surviving {
        if !overlapping.contains_key(&entity.entity_id) {
            continue;
        }
        let add = entity.mean_error > rho_pho;
        for i in 0..output.data.len() {
            if entity_map.data[i] == entity.entity_id {
                output.data[i] = add;
            }
        }
    }
    output
}
