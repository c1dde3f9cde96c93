//! Perturbation scans: closed-orbit searches over a one-parameter family of
//! metrics, looking for the first elliptic orbit.

use std::io::{self, Write};

use geodesic_reeb::orbits::{find_closed, Classification, ClosedOrbitRecord, FindOptions};
use geodesic_reeb::winding::parity_check;
use geodesic_reeb::TangentState;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Family;
use crate::error::LabError;

/// Largest pairwise disagreement of the three monodromy traces accepted for an
/// elliptic hit.
pub const TRACE_AGREEMENT: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub find: FindOptions,
    pub seed: u64,
    /// Size of the random perturbation applied to each guess.
    pub jitter: f64,
}

#[derive(Debug, Clone)]
pub struct ScanCell {
    pub guess: usize,
    pub start: TangentState,
    pub outcome: Result<ClosedOrbitRecord, String>,
    /// `None` for degenerate orbits and failed searches.
    pub parity: Option<Result<bool, String>>,
}

impl ScanCell {
    pub fn record(&self) -> Option<&ClosedOrbitRecord> {
        self.outcome.as_ref().ok()
    }

    pub fn is_elliptic_hit(&self) -> bool {
        self.record().is_some_and(|r| {
            r.classification == Classification::Elliptic
                && r.lift.cz_index.is_some_and(|k| k.rem_euclid(2) == 1)
                && r.traces.max_disagreement() < TRACE_AGREEMENT
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub index: usize,
    pub epsilon: f64,
    pub cells: Vec<ScanCell>,
}

impl ScanRow {
    pub fn has_elliptic(&self) -> bool {
        self.cells.iter().any(ScanCell::is_elliptic_hit)
    }
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    pub first_elliptic: Option<f64>,
}

impl ScanReport {
    pub fn cells(&self) -> impl Iterator<Item = (&ScanRow, &ScanCell)> {
        self.rows
            .iter()
            .flat_map(|r| r.cells.iter().map(move |c| (r, c)))
    }

    pub fn parity_failures(&self) -> usize {
        self.cells()
            .filter(|(_, c)| !matches!(c.parity, None | Some(Ok(true))))
            .count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "epsilon,guess,status,classification,period,trace_jacobi,trace_linearized,trace_shooting,\
             lift_classification,cz,parity,error"
        )?;
        for (row, cell) in self.cells() {
            match &cell.outcome {
                Ok(r) => {
                    let cz = r.lift.cz_index.map(|k| k.to_string()).unwrap_or_default();
                    let parity = match &cell.parity {
                        None => String::new(),
                        Some(Ok(p)) => p.to_string(),
                        Some(Err(_)) => "error".into(),
                    };
                    let err = match &cell.parity {
                        Some(Err(e)) => csv_text(e),
                        _ => String::new(),
                    };
                    writeln!(
                        w,
                        "{:?},{},ok,{},{:?},{:?},{:?},{:?},{},{},{},{}",
                        row.epsilon,
                        cell.guess,
                        r.classification,
                        r.period,
                        r.traces.jacobi,
                        r.traces.linearized,
                        r.traces.shooting,
                        r.lift.classification,
                        cz,
                        parity,
                        err
                    )?;
                }
                Err(e) => writeln!(
                    w,
                    "{:?},{},failed,,,,,,,,,{}",
                    row.epsilon,
                    cell.guess,
                    csv_text(e)
                )?,
            }
        }
        Ok(())
    }
}

fn csv_text(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn perturbed(guess: &TangentState, jitter: f64, rng: &mut ChaCha8Rng) -> TangentState {
    if jitter == 0.0 {
        return *guess;
    }
    let mut draw = || Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)) * jitter;
    TangentState {
        x: guess.x + draw(),
        v: guess.v + draw(),
    }
}

fn run_row(
    family: &Family,
    guesses: &[TangentState],
    index: usize,
    epsilon: f64,
    opts: &ScanOptions,
) -> ScanRow {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(index as u64);
    let metric = family.metric(epsilon);
    let cells = guesses
        .iter()
        .enumerate()
        .map(|(g, guess)| {
            let start = perturbed(guess, opts.jitter, &mut rng);
            let outcome = match &metric {
                Ok(m) => find_closed(m, &start, &opts.find).and_then(|r| r.validate().map(|_| r)),
                Err(e) => Err(e.clone()),
            }
            .map_err(|e| e.to_string());
            let parity = outcome
                .as_ref()
                .ok()
                .filter(|r| r.lift.classification != Classification::Degenerate)
                .map(|r| parity_check(r).map_err(|e| e.to_string()));
            ScanCell {
                guess: g,
                start,
                outcome,
                parity,
            }
        })
        .collect();
    ScanRow {
        index,
        epsilon,
        cells,
    }
}

/// Runs [`find_closed`] from every guess at every ε, in parallel over ε.
/// Failed cells are recorded rather than aborting the scan.
pub fn elliptic_scan(
    family: &Family,
    guesses: &[TangentState],
    epsilons: &[f64],
    opts: &ScanOptions,
) -> Result<ScanReport, LabError> {
    if epsilons.is_empty() {
        return Err(LabError::Config("scan grid is empty".into()));
    }
    if guesses.is_empty() {
        return Err(LabError::Config("scan needs at least one guess".into()));
    }
    if let Some(g) = guesses.iter().find(|g| !(g.x.cross(&g.v).norm() > 0.0)) {
        return Err(LabError::Config(format!(
            "invalid guess x = {:?}, v = {:?}",
            g.x, g.v
        )));
    }
    let mut order: Vec<(usize, f64)> = epsilons.iter().copied().enumerate().collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let rows: Vec<ScanRow> = order
        .par_iter()
        .map(|&(i, eps)| run_row(family, guesses, i, eps, opts))
        .collect();
    let first_elliptic = rows.iter().find(|r| r.has_elliptic()).map(|r| r.epsilon);
    Ok(ScanReport {
        rows,
        first_elliptic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_row_is_degenerate_without_parity() {
        let family = Family {
            terms: vec![((2, 0), 1.0)],
        };
        let guesses = vec![TangentState {
            x: Vector3::x(),
            v: Vector3::y(),
        }];
        let opts = ScanOptions {
            find: FindOptions::default(),
            seed: 3,
            jitter: 0.0,
        };
        let report = elliptic_scan(&family, &guesses, &[0.0], &opts).unwrap();
        let cell = &report.rows[0].cells[0];
        assert_eq!(
            cell.record().unwrap().classification,
            Classification::Degenerate
        );
        assert!(cell.parity.is_none());
        assert_eq!(report.first_elliptic, None);
    }

    #[test]
    fn jitter_is_reproducible() {
        let g = TangentState {
            x: Vector3::x(),
            v: Vector3::y(),
        };
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            perturbed(&g, 1e-2, &mut rng)
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }
}
