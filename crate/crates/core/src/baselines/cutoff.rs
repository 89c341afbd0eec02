//! Cutoff strategies over a descending similarity score list. Each returns
//! how many leading items to keep, so every result is a prefix.

use super::BaselineError;

/// Diffs closer than this to the largest one count as ties.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffStrategy {
    /// Keep every score strictly above `theta`.
    T1 { theta: f64 },
    /// Keep through the last gap larger than a third of the largest gap.
    T2,
    /// Keep through the largest gap.
    T3,
}

impl CutoffStrategy {
    pub fn keep_count(&self, scores: &[f64]) -> Result<usize, BaselineError> {
        match *self {
            CutoffStrategy::T1 { theta } => Ok(keep_count_t1(scores, theta)),
            CutoffStrategy::T2 => keep_count_t2(scores),
            CutoffStrategy::T3 => keep_count_t3(scores),
        }
    }
}

pub fn keep_count_t1(scores: &[f64], theta: f64) -> usize {
    scores.iter().take_while(|&&s| s > theta).count()
}

fn diffs(scores: &[f64]) -> Result<Vec<f64>, BaselineError> {
    if scores.len() < 2 {
        return Err(BaselineError::TooFewScores(scores.len()));
    }
    Ok(scores.windows(2).map(|w| w[0] - w[1]).collect())
}

pub fn keep_count_t2(scores: &[f64]) -> Result<usize, BaselineError> {
    let d = diffs(scores)?;
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(d.iter().rposition(|&x| x > max / 3.0).map_or(0, |j| j + 1))
}

pub fn keep_count_t3(scores: &[f64]) -> Result<usize, BaselineError> {
    let d = diffs(scores)?;
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let j = d.iter().position(|&x| x >= max - TIE_EPS).expect("max is attained");
    Ok(j + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKED: [f64; 8] = [0.85, 0.82, 0.80, 0.78, 0.60, 0.58, 0.57, 0.40];

    #[test]
    fn t1_is_strict() {
        assert_eq!(keep_count_t1(&[0.4, 0.3], 0.5), 0);
        assert_eq!(keep_count_t1(&[0.9, 0.6, 0.4], 0.5), 2);
        assert_eq!(keep_count_t1(&[0.7, 0.5], 0.5), 1);
    }

    #[test]
    fn t2_worked_example() {
        let n = keep_count_t2(&WORKED).unwrap();
        assert_eq!(n, 7);
        assert_eq!(WORKED[n - 1], 0.57);
    }

    #[test]
    fn t2_edges() {
        assert_eq!(keep_count_t2(&[0.5, 0.5, 0.5]).unwrap(), 0);
        assert_eq!(keep_count_t2(&[0.9, 0.1]).unwrap(), 1);
        assert!(matches!(keep_count_t2(&[0.9]), Err(BaselineError::TooFewScores(1))));
    }

    #[test]
    fn t3_worked_example() {
        let n = keep_count_t3(&WORKED).unwrap();
        assert_eq!(n, 4);
        assert_eq!(WORKED[n - 1], 0.78);
    }

    #[test]
    fn t3_edges() {
        assert_eq!(keep_count_t3(&[0.9, 0.5, 0.1]).unwrap(), 1);
        assert_eq!(keep_count_t3(&[0.7, 0.7, 0.7, 0.2]).unwrap(), 3);
        assert!(keep_count_t3(&[]).is_err());
    }
}
