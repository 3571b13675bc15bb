use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dice, segment_atrophy, SegParams};
use crate::raster::GrayImage;
use crate::stats::compensated_sum;
use crate::{Error, Result};

/// Cartesian grid of segmentation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub sigma_coefs: Vec<f64>,
    pub cap_fracs: Vec<f64>,
    pub seed_fracs: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            sigma_coefs: vec![1.0, 1.5, 2.0],
            cap_fracs: vec![0.60, 0.70, 0.80],
            seed_fracs: vec![0.10, 0.15, 0.20],
        }
    }
}

impl SweepGrid {
    /// Cells in (sigma, cap, seed) lexicographic order.
    pub fn cells(&self, base: &SegParams) -> Vec<SegParams> {
        let mut out = Vec::new();
        for &sigma_coef in &self.sigma_coefs {
            for &cap_frac in &self.cap_fracs {
                for &seed_radius_frac in &self.seed_fracs {
                    out.push(SegParams {
                        sigma_coef,
                        cap_frac,
                        seed_radius_frac,
                        ..*base
                    });
                }
            }
        }
        out
    }
}

/// Ground truth target plus one prediction per method, all for one eye.
#[derive(Debug, Clone)]
pub struct SweepCase {
    pub eye_id: String,
    pub target: GrayImage,
    pub predictions: Vec<GrayImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub sigma_coef: f64,
    pub cap_frac: f64,
    pub seed_frac: f64,
    pub n_eyes: usize,
    /// Eyes skipped because a segmentation failed.
    pub excluded: Vec<String>,
    /// Per method; `None` when no eye survived.
    pub mean_dice: Vec<Option<f64>>,
    /// Per method, 1 = best; ties share the average rank.
    pub ranks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub method: String,
    pub mean_rank: f64,
    pub rank_le2_count: usize,
    pub rank_ge4_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub n_cells: usize,
    pub rows: Vec<RankRow>,
}

impl RankTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,mean_rank,rank_le2_count,rank_ge4_count\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.method, r.mean_rank, r.rank_le2_count, r.rank_ge4_count
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub methods: Vec<String>,
    pub cells: Vec<CellResult>,
    pub table: RankTable,
}

/// Average ranks, descending by score.
fn rank_descending(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Dice per method for one eye under one parameter cell, or `None` when any
/// segmentation in the eye fails.
fn case_dice(case: &SweepCase, params: &SegParams) -> Option<Vec<f64>> {
    let gt = segment_atrophy(&case.target, params).ok()?;
    case.predictions
        .iter()
        .map(|p| {
            let seg = segment_atrophy(p, params).ok()?;
            dice(&seg.mask, &gt.mask).ok()
        })
        .collect()
}

/// Segments every target and prediction under each grid cell with identical
/// parameters, ranks methods by mean Dice per cell and aggregates the ranks.
pub fn sensitivity_sweep(
    methods: &[String],
    cases: &[SweepCase],
    grid: &SweepGrid,
    base: &SegParams,
) -> Result<SweepReport> {
    if methods.is_empty() || cases.is_empty() {
        return Err(Error::EmptyList);
    }
    for c in cases {
        if c.predictions.len() != methods.len() {
            return Err(Error::InvalidValue(format!(
                "eye {} has {} predictions for {} methods",
                c.eye_id,
                c.predictions.len(),
                methods.len()
            )));
        }
    }
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(Error::InvalidConfig("sweep grid has no cells".into()));
    }
    for c in &cells {
        c.validate()?;
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cases.len()).map(move |e| (c, e)))
        .collect();
    let results: Vec<Option<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(c, e)| case_dice(&cases[e], &cells[c]))
        .collect();

    let m = methods.len();
    let mut cell_results = Vec::with_capacity(cells.len());
    for (ci, params) in cells.iter().enumerate() {
        let row = &results[ci * cases.len()..(ci + 1) * cases.len()];
        let mut excluded = Vec::new();
        let mut per_method: Vec<Vec<f64>> = vec![Vec::new(); m];
        for (case, r) in cases.iter().zip(row) {
            match r {
                Some(d) => {
                    for (k, v) in d.iter().enumerate() {
                        per_method[k].push(*v);
                    }
                }
                None => excluded.push(case.eye_id.clone()),
            }
        }
        let n_eyes = cases.len() - excluded.len();
        let mean_dice: Vec<Option<f64>> = per_method
            .iter()
            .map(|v| (!v.is_empty()).then(|| compensated_sum(v.iter().copied()) / v.len() as f64))
            .collect();
        let ranks = if n_eyes > 0 {
            rank_descending(
                &mean_dice
                    .iter()
                    .map(|d| d.unwrap_or(0.0))
                    .collect::<Vec<_>>(),
            )
        } else {
            Vec::new()
        };
        cell_results.push(CellResult {
            sigma_coef: params.sigma_coef,
            cap_frac: params.cap_frac,
            seed_frac: params.seed_radius_frac,
            n_eyes,
            excluded,
            mean_dice,
            ranks,
        });
    }

    let ranked: Vec<&CellResult> = cell_results
        .iter()
        .filter(|c| !c.ranks.is_empty())
        .collect();
    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let rs: Vec<f64> = ranked.iter().map(|c| c.ranks[k]).collect();
            RankRow {
                method: name.clone(),
                mean_rank: if rs.is_empty() {
                    f64::NAN
                } else {
                    compensated_sum(rs.iter().copied()) / rs.len() as f64
                },
                rank_le2_count: rs.iter().filter(|&&r| r <= 2.0).count(),
                rank_ge4_count: rs.iter().filter(|&&r| r >= 4.0).count(),
            }
        })
        .collect();
    Ok(SweepReport {
        methods: methods.to_vec(),
        table: RankTable {
            n_cells: ranked.len(),
            rows,
        },
        cells: cell_results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Scale;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn lesion_image(n: usize, r: f64, noise: f64, rng: &mut ChaCha8Rng) -> GrayImage {
        let c = (n as f64 - 1.0) / 2.0;
        let normal = Normal::new(0.0, noise.max(1e-12)).unwrap();
        GrayImage::from_fn(n, n, Scale::Byte, |x, y| {
            let d = (x as f64 - c).hypot(y as f64 - c);
            let base = if d < r { 25.0 } else { 150.0 };
            let e = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
            (base + e).round().clamp(0.0, 255.0)
        })
        .unwrap()
    }

    #[test]
    fn rank_ties_are_averaged() {
        assert_eq!(
            rank_descending(&[0.9, 0.5, 0.9, 0.1]),
            vec![1.5, 3.0, 1.5, 4.0]
        );
    }

    #[test]
    fn single_method_always_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cases: Vec<SweepCase> = (0..2)
            .map(|i| SweepCase {
                eye_id: format!("e{i}"),
                target: lesion_image(64, 8.0, 0.0, &mut rng),
                predictions: vec![lesion_image(64, 9.0, 5.0, &mut rng)],
            })
            .collect();
        let r = sensitivity_sweep(
            &["only".into()],
            &cases,
            &SweepGrid::default(),
            &SegParams::default(),
        )
        .unwrap();
        assert_eq!(r.table.n_cells, 27);
        assert_eq!(r.table.rows[0].mean_rank, 1.0);
        assert_eq!(r.table.rows[0].rank_le2_count, 27);
    }

    #[test]
    fn quality_ordering_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let methods: Vec<String> = ["exact", "mild", "severe"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cases: Vec<SweepCase> = (0..4)
            .map(|i| {
                let r = 7.0 + i as f64;
                SweepCase {
                    eye_id: format!("e{i}"),
                    target: lesion_image(64, r, 0.0, &mut rng),
                    predictions: vec![
                        lesion_image(64, r, 0.0, &mut rng),
                        lesion_image(64, r + 1.5, 0.0, &mut rng),
                        lesion_image(64, r + 4.0, 0.0, &mut rng),
                    ],
                }
            })
            .collect();
        let r = sensitivity_sweep(
            &methods,
            &cases,
            &SweepGrid::default(),
            &SegParams::default(),
        )
        .unwrap();
        let ranks: Vec<f64> = r.table.rows.iter().map(|row| row.mean_rank).collect();
        assert_eq!(ranks[0], 1.0);
        assert!(ranks[0] < ranks[1] && ranks[1] < ranks[2]);
        let csv = r.table.to_csv();
        assert!(csv.starts_with("method,mean_rank,rank_le2_count,rank_ge4_count\nexact,1,27,0\n"));
    }

    #[test]
    fn failing_segmentations_are_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let good = SweepCase {
            eye_id: "good".into(),
            target: lesion_image(48, 6.0, 0.0, &mut rng),
            predictions: vec![lesion_image(48, 6.0, 0.0, &mut rng)],
        };
        let black = GrayImage::filled(48, 48, 0.0, Scale::Byte).unwrap();
        let bad = SweepCase {
            eye_id: "bad".into(),
            target: lesion_image(48, 6.0, 0.0, &mut rng),
            predictions: vec![black],
        };
        let grid = SweepGrid {
            sigma_coefs: vec![1.5],
            cap_fracs: vec![0.7],
            seed_fracs: vec![0.15],
        };
        let r =
            sensitivity_sweep(&["m".into()], &[good, bad], &grid, &SegParams::default()).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.cells[0].excluded, vec!["bad".to_string()]);
        assert_eq!(r.cells[0].n_eyes, 1);
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cases: Vec<SweepCase> = (0..3)
            .map(|i| SweepCase {
                eye_id: format!("e{i}"),
                target: lesion_image(48, 6.0, 3.0, &mut rng),
                predictions: vec![
                    lesion_image(48, 6.0, 8.0, &mut rng),
                    lesion_image(48, 7.0, 12.0, &mut rng),
                ],
            })
            .collect();
        let methods = vec!["a".to_string(), "b".to_string()];
        let r1 = sensitivity_sweep(
            &methods,
            &cases,
            &SweepGrid::default(),
            &SegParams::default(),
        )
        .unwrap();
        let r2 = sensitivity_sweep(
            &methods,
            &cases,
            &SweepGrid::default(),
            &SegParams::default(),
        )
        .unwrap();
        assert_eq!(r1, r2);
    }
}
