//! Least-squares isotonic regression by pool-adjacent-violators.

use serde::{Deserialize, Serialize};

use super::ConformalError;

/// Nondecreasing fit of targets against a sorted predictor.
///
/// `breakpoints`/`fitted` hold the per-point solution. Evaluation at new
/// predictor values interpolates linearly between block knots (block mean of
/// the predictor, block value) and extrapolates the end segments, clamped to
/// `[0, 1]`; this keeps the function strictly increasing between the extreme
/// knots so it has a nonzero slope almost everywhere.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    breakpoints: Vec<f64>,
    fitted: Vec<f64>,
    knot_x: Vec<f64>,
    knot_y: Vec<f64>,
}

struct Block {
    mean_y: f64,
    sum_x: f64,
    weight: f64,
    len: usize,
}

impl Block {
    fn point(x: f64, y: f64) -> Self {
        Self {
            mean_y: y,
            sum_x: x,
            weight: 1.0,
            len: 1,
        }
    }

    /// Pools `other` into `self`; pooling equal means leaves the mean
    /// bit-identical.
    fn absorb(&mut self, other: &Block) {
        let w = self.weight + other.weight;
        if self.mean_y != other.mean_y {
            self.mean_y = (self.mean_y * self.weight + other.mean_y * other.weight) / w;
        }
        self.sum_x += other.sum_x;
        self.weight = w;
        self.len += other.len;
    }
}

/// Fits `ys` (clamped to `[0, 1]`) against ascending `xs`. Points with equal
/// predictor values share one fitted value.
pub fn pava_fit(xs: &[f64], ys: &[f64]) -> Result<IsotonicFit, ConformalError> {
    if xs.len() != ys.len() {
        return Err(ConformalError::Invalid(format!(
            "{} predictor values for {} targets",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(ConformalError::Invalid(
            "isotonic inputs must be finite".into(),
        ));
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(ConformalError::Invalid(
            "predictor values must be sorted ascending".into(),
        ));
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(xs.len());
    let mut i = 0;
    while i < xs.len() {
        // Tied predictor values start out pooled.
        let x = xs[i];
        let mut block = Block::point(x, ys[i].clamp(0.0, 1.0));
        i += 1;
        while i < xs.len() && xs[i] == x {
            block.absorb(&Block::point(x, ys[i].clamp(0.0, 1.0)));
            i += 1;
        }
        blocks.push(block);
        // Merging equal neighbours as well keeps block values strictly increasing.
        while blocks.len() > 1 && blocks[blocks.len() - 2].mean_y >= blocks[blocks.len() - 1].mean_y
        {
            let top = blocks.pop().unwrap();
            blocks.last_mut().unwrap().absorb(&top);
        }
    }
    let mut fitted = Vec::with_capacity(xs.len());
    let mut knot_x = Vec::with_capacity(blocks.len());
    let mut knot_y = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let m = b.mean_y;
        fitted.extend(std::iter::repeat_n(m, b.len));
        knot_x.push(b.sum_x / b.weight);
        knot_y.push(m);
    }
    Ok(IsotonicFit {
        breakpoints: xs.to_vec(),
        fitted,
        knot_x,
        knot_y,
    })
}

impl IsotonicFit {
    /// Fits unsorted `(x, y)` pairs by sorting on `x` first.
    pub fn fit_unsorted(xs: &[f64], ys: &[f64]) -> Result<Self, ConformalError> {
        if xs.len() != ys.len() {
            return Err(ConformalError::Invalid(
                "isotonic inputs differ in length".into(),
            ));
        }
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
        let sy: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
        pava_fit(&sx, &sy)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    /// Number of pooled blocks.
    pub fn n_blocks(&self) -> usize {
        self.knot_x.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_slope(x).0
    }

    /// Value and derivative of the interpolated fit at `x`. The derivative
    /// is zero where the value is clamped.
    pub fn eval_with_slope(&self, x: f64) -> (f64, f64) {
        let n = self.knot_x.len();
        match n {
            0 => return (0.5, 0.0),
            1 => return (self.knot_y[0], 0.0),
            _ => {}
        }
        // Segment index: first knot strictly greater than x, kept inside 1..n-1.
        let upper = self.knot_x.partition_point(|&k| k <= x).clamp(1, n - 1);
        let (x0, x1) = (self.knot_x[upper - 1], self.knot_x[upper]);
        let (y0, y1) = (self.knot_y[upper - 1], self.knot_y[upper]);
        let slope = (y1 - y0) / (x1 - x0);
        let v = y0 + slope * (x - x0);
        if v <= 0.0 {
            (0.0, 0.0)
        } else if v >= 1.0 {
            (1.0, 0.0)
        } else {
            (v, slope)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(ys: &[f64]) -> Vec<f64> {
        let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        pava_fit(&xs, ys).unwrap().fitted().to_vec()
    }

    #[test]
    fn monotone_input_is_unchanged() {
        assert_eq!(fit(&[0.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn violators_are_pooled() {
        assert_eq!(fit(&[1.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(fit(&[1.0, 0.0, 2.0]), vec![0.5, 0.5, 1.0]);
        assert_eq!(
            fit(&[0.0, 1.0, 0.0, 1.0, 1.0]),
            vec![0.0, 0.5, 0.5, 1.0, 1.0]
        );
    }

    #[test]
    fn tied_predictors_share_a_value() {
        let f = pava_fit(&[0.0, 1.0, 1.0, 2.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.fitted(), &[0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn input_errors() {
        assert!(pava_fit(&[0.0, 1.0], &[0.0]).is_err());
        assert!(pava_fit(&[1.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn interpolation_between_knots() {
        // Blocks: {0} -> 0, {1,2} -> 0.5, {3} -> 1 with knot x = 0, 1.5, 3.
        let f = pava_fit(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.n_blocks(), 3);
        assert_eq!(f.eval(1.5), 0.5);
        let (v, s) = f.eval_with_slope(0.75);
        assert!((v - 0.25).abs() < 1e-15 && (s - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.eval_with_slope(-1.0), (0.0, 0.0));
        assert_eq!(f.eval_with_slope(10.0), (1.0, 0.0));
    }

    #[test]
    fn end_segments_extrapolate_before_clamping() {
        let f = pava_fit(&[0.0, 1.0], &[0.25, 0.75]).unwrap();
        let (v, s) = f.eval_with_slope(-0.25);
        assert!((v - 0.125).abs() < 1e-15 && (s - 0.5).abs() < 1e-15);
        assert_eq!(f.eval(5.0), 1.0);
    }

    #[test]
    fn single_block_is_constant() {
        let f = pava_fit(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_eq!(f.eval_with_slope(0.3), (0.5, 0.0));
        assert_eq!(pava_fit(&[], &[]).unwrap().eval(0.2), 0.5);
    }
}
