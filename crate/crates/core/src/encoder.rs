//! Global atrous sliding window encoding.
//!
//! Each window of differences is placed into the partitioned universe of
//! discourse of the training differences: every element becomes a row holding
//! all interval boundaries with the element inserted at its interval. The
//! inserted slot is then overwritten by the window's last element, the rows are
//! padded so that slot sits in the middle, cropped to a common odd width, and
//! finally filtered outward from the centre in both directions by the
//! central-bidirectional atrous filter.

use thiserror::Error;

/// Floor applied to the spread φ so that ξ stays positive on constant series.
pub const PHI_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("universe needs at least 4 training differences, got {0}")]
    SeriesTooShort(usize),
    #[error("non-finite difference in the training sequence")]
    NonFinite,
    #[error("encoded width {width} too narrow for filter size {size} at dilation {dilation}; need at least {required}")]
    FilterTooLarge { width: usize, size: usize, dilation: usize, required: usize },
    #[error("filter must have at least one tap and dilation ≥ 1")]
    InvalidFilter,
}

/// Partitioned universe of discourse `[α_min − φ, α_max + φ]` split into `N`
/// equal intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Universe {
    pub beta_l: f64,
    pub beta_u: f64,
    pub xi: f64,
    pub n_intervals: usize,
    pub phi: f64,
}

/// φ: population standard deviation, floored at [`PHI_FLOOR`].
pub fn spread(alphas: &[f64]) -> f64 {
    let n = alphas.len() as f64;
    let mean = alphas.iter().sum::<f64>() / n;
    let var = alphas.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    var.sqrt().max(PHI_FLOOR)
}

/// `N = max(1, floor(log2 h) − 1)`.
pub fn interval_count(h: usize) -> usize {
    let log2 = (usize::BITS - 1 - h.leading_zeros()) as usize;
    log2.saturating_sub(1).max(1)
}

impl Universe {
    pub fn build(alphas: &[f64]) -> Result<Universe, EncoderError> {
        let h = alphas.len();
        if h < 4 {
            return Err(EncoderError::SeriesTooShort(h));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        let phi = spread(alphas);
        let (min, max) = alphas
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
        Ok(Universe::from_bounds(min - phi, max + phi, interval_count(h), phi))
    }

    pub fn from_bounds(beta_l: f64, beta_u: f64, n_intervals: usize, phi: f64) -> Universe {
        Universe {
            beta_l,
            beta_u,
            xi: (beta_u - beta_l) / n_intervals as f64,
            n_intervals,
            phi,
        }
    }

    /// Boundary `k`, `0 ≤ k ≤ N`; the last one is `beta_u` exactly.
    pub fn boundary(&self, k: usize) -> f64 {
        if k >= self.n_intervals {
            self.beta_u
        } else {
            self.beta_l + k as f64 * self.xi
        }
    }

    pub fn boundaries(&self) -> Vec<f64> {
        (0..=self.n_intervals).map(|k| self.boundary(k)).collect()
    }

    /// Slot κ' for `alpha`: the value is inserted right after boundary κ'.
    ///
    /// Intervals are left-closed; `beta_u` itself belongs to the last interval.
    /// Values below the universe clamp to slot 0, values above it to slot `N`.
    pub fn slot(&self, alpha: f64) -> usize {
        let n = self.n_intervals;
        if alpha > self.beta_u {
            return n;
        }
        if alpha >= self.beta_u {
            return n - 1;
        }
        if alpha < self.beta_l {
            return 0;
        }
        // Largest k < N with boundary(k) <= alpha.
        let (mut lo, mut hi) = (0usize, n - 1);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.boundary(mid) <= alpha {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Common width `S` every encoded window is cropped to: the narrowest
    /// padded row this universe can produce, `2·(⌊N/2⌋ + 1) + 1`.
    pub fn encoded_width(&self) -> usize {
        2 * (self.n_intervals / 2 + 1) + 1
    }
}

/// Rows of the integrated window before padding, each of length `N + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRows {
    pub rows: Vec<Vec<f64>>,
    /// κ' per row; the inserted element sits at index κ' + 1.
    pub positions: Vec<usize>,
    pub beta_l: f64,
    pub beta_u: f64,
}

pub fn integrate(window: &[f64], u: &Universe) -> RawRows {
    let bounds = u.boundaries();
    let mut rows = Vec::with_capacity(window.len());
    let mut positions = Vec::with_capacity(window.len());
    for &alpha in window {
        let k = u.slot(alpha);
        let mut row = Vec::with_capacity(bounds.len() + 1);
        row.extend_from_slice(&bounds[..=k]);
        row.push(alpha);
        row.extend_from_slice(&bounds[k + 1..]);
        rows.push(row);
        positions.push(k);
    }
    RawRows { rows, positions, beta_l: u.beta_l, beta_u: u.beta_u }
}

/// Overwrites every inserted slot with `center_value`; positions are kept.
pub fn replace_with_last(mut raw: RawRows, center_value: f64) -> RawRows {
    for (row, &k) in raw.rows.iter_mut().zip(&raw.positions) {
        row[k + 1] = center_value;
    }
    raw
}

/// A `W × S` encoded window, row-major. Column `(S − 1) / 2` holds the
/// replacement value in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedWindow {
    pub data: Vec<f64>,
    pub n_rows: usize,
    pub width: usize,
    pub center_value: f64,
    pub row_positions: Vec<usize>,
}

impl EncodedWindow {
    pub fn center_col(&self) -> usize {
        (self.width - 1) / 2
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    /// Symmetric crop to a narrower odd width.
    pub fn cropped(&self, width: usize) -> EncodedWindow {
        assert!(width % 2 == 1 && width <= self.width, "crop width must be odd and ≤ {}", self.width);
        let m = (self.width - width) / 2;
        let mut data = Vec::with_capacity(self.n_rows * width);
        for r in 0..self.n_rows {
            data.extend_from_slice(&self.row(r)[m..m + width]);
        }
        EncodedWindow { data, width, ..self.clone() }
    }

    /// One CSV line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.n_rows {
            let line: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Pads each row on its shorter side (with `beta_l` on the left, `beta_u` on
/// the right) until the inserted slot is centred, then crops every row
/// symmetrically to the shortest padded length.
pub fn pad_and_crop(raw: &RawRows) -> EncodedWindow {
    let mut padded: Vec<Vec<f64>> = Vec::with_capacity(raw.rows.len());
    for (row, &k) in raw.rows.iter().zip(&raw.positions) {
        let left = k + 1;
        let right = row.len() - left - 1;
        let half = left.max(right);
        let mut p = Vec::with_capacity(2 * half + 1);
        p.extend(std::iter::repeat_n(raw.beta_l, half - left));
        p.extend_from_slice(row);
        p.extend(std::iter::repeat_n(raw.beta_u, half - right));
        padded.push(p);
    }
    let width = padded.iter().map(Vec::len).min().unwrap_or(1);
    let mut data = Vec::with_capacity(padded.len() * width);
    for p in &padded {
        let m = (p.len() - width) / 2;
        data.extend_from_slice(&p[m..m + width]);
    }
    let center_value = padded.first().map(|p| p[(p.len() - 1) / 2]).unwrap_or(0.0);
    EncodedWindow {
        data,
        n_rows: padded.len(),
        width,
        center_value,
        row_positions: raw.positions.clone(),
    }
}

/// Full encoding of one window at the universe's common width.
pub fn encode_window(window: &[f64], u: &Universe) -> EncodedWindow {
    let last = *window.last().expect("window is non-empty");
    let raw = replace_with_last(integrate(window, u), last);
    pad_and_crop(&raw).cropped(u.encoded_width())
}

/// Output of the central-bidirectional atrous filter: `W × (2·Lc + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbaaFeatures {
    pub data: Vec<f64>,
    pub n_rows: usize,
    pub width: usize,
}

impl CbaaFeatures {
    pub fn center_col(&self) -> usize {
        (self.width - 1) / 2
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

/// Per-side output length of the filter, or the error naming the minimum
/// encoded width.
pub fn cbaa_side_len(width: usize, size: usize, dilation: usize) -> Result<usize, EncoderError> {
    if size == 0 || dilation == 0 {
        return Err(EncoderError::InvalidFilter);
    }
    let half = (width - 1) / 2;
    let reach = (size - 1) * dilation;
    if half < reach + 1 {
        return Err(EncoderError::FilterTooLarge { width, size, dilation, required: 2 * (reach + 1) + 1 });
    }
    Ok(half - reach)
}

/// Dilated filtering outward from the centre: the right half from `x̊_p`
/// rightward, the left half from `x_p` leftward. `left` and `right` are the
/// filters for the two directions (pass the same slice for shared weights).
/// Left features are written back in left-to-right spatial order.
pub fn cbaa_with(
    win: &EncodedWindow,
    left: &[f64],
    right: &[f64],
    dilation: usize,
) -> Result<CbaaFeatures, EncoderError> {
    assert_eq!(left.len(), right.len(), "direction filters must share a size");
    let lc = cbaa_side_len(win.width, left.len(), dilation)?;
    let c0 = win.center_col();
    let out_w = 2 * lc + 1;
    let mut data = vec![0.0; win.n_rows * out_w];
    for r in 0..win.n_rows {
        let row = win.row(r);
        let out = &mut data[r * out_w..(r + 1) * out_w];
        out[lc] = row[c0];
        for t in 0..lc {
            let mut acc_r = 0.0;
            let mut acc_l = 0.0;
            for g in 0..left.len() {
                let off = t + g * dilation + 1;
                acc_r += right[g] * row[c0 + off];
                acc_l += left[g] * row[c0 - off];
            }
            out[lc + 1 + t] = acc_r;
            out[lc - 1 - t] = acc_l;
        }
    }
    Ok(CbaaFeatures { data, n_rows: win.n_rows, width: out_w })
}

pub fn cbaa(win: &EncodedWindow, filter: &[f64], dilation: usize) -> Result<CbaaFeatures, EncoderError> {
    cbaa_with(win, filter, filter, dilation)
}

/// Gradient of `Σ upstream · cbaa(win, ·)` with respect to the left and right
/// filter taps.
pub(crate) fn cbaa_filter_grad(
    win: &EncodedWindow,
    upstream: &[f64],
    size: usize,
    dilation: usize,
    grad_left: &mut [f64],
    grad_right: &mut [f64],
) {
    let c0 = win.center_col();
    let lc = (win.width - 1) / 2 - (size - 1) * dilation;
    let out_w = 2 * lc + 1;
    for r in 0..win.n_rows {
        let row = win.row(r);
        let up = &upstream[r * out_w..(r + 1) * out_w];
        for t in 0..lc {
            let ur = up[lc + 1 + t];
            let ul = up[lc - 1 - t];
            for g in 0..size {
                let off = t + g * dilation + 1;
                grad_right[g] += ur * row[c0 + off];
                grad_left[g] += ul * row[c0 - off];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn u010() -> Universe {
        Universe::from_bounds(0.0, 10.0, 2, 1.0)
    }

    #[test]
    fn interval_count_rule() {
        assert_eq!(interval_count(1024), 9);
        assert_eq!(interval_count(1023), 8);
        assert_eq!(interval_count(4), 1);
        assert_eq!(interval_count(7), 1);
        assert_eq!(interval_count(8), 2);
    }

    #[test]
    fn universe_statistics() {
        assert_eq!(Universe::build(&[2.0, -3.0, 5.0]), Err(EncoderError::SeriesTooShort(3)));
        // [2,-3,5,1]: mean 5/4, population variance (0.5625+18.0625+14.0625+0.0625)/4 = 8.1875
        let u = Universe::build(&[2.0, -3.0, 5.0, 1.0]).unwrap();
        assert_relative_eq!(u.phi, 8.1875f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(u.beta_l, -3.0 - u.phi, max_relative = 1e-14);
        assert_relative_eq!(u.beta_u, 5.0 + u.phi, max_relative = 1e-14);
        assert_eq!(u.n_intervals, 1);
        assert_relative_eq!(u.xi, u.beta_u - u.beta_l, max_relative = 1e-14);
    }

    #[test]
    fn phi_of_three_element_sequence() {
        // Frozen from an independent high-precision evaluation:
        // sqrt(98/9) = 3.29983164553722178..., U = [-6.29983.., 8.29983..].
        let phi = spread(&[2.0, -3.0, 5.0]);
        assert_relative_eq!(phi, 3.299_831_645_537_221_8, max_relative = 1e-15);
        let u = Universe::from_bounds(-3.0 - phi, 5.0 + phi, 1, phi);
        assert_relative_eq!(u.beta_l, -6.299_831_645_537_222, max_relative = 1e-15);
        assert_relative_eq!(u.beta_u, 8.299_831_645_537_222, max_relative = 1e-15);
    }

    #[test]
    fn constant_differences_use_phi_floor() {
        let u = Universe::build(&[0.0; 16]).unwrap();
        assert_eq!(u.phi, PHI_FLOOR);
        assert_eq!(u.beta_l, -1e-8);
        assert_eq!(u.beta_u, 1e-8);
        assert_eq!(u.n_intervals, 3);
        assert!(u.xi > 0.0);
    }

    #[test]
    fn last_boundary_is_upper_bound() {
        let u = Universe::from_bounds(-0.3, 0.7, 7, 0.1);
        assert_eq!(u.boundary(7), 0.7);
        assert_relative_eq!(u.beta_l + 7.0 * u.xi, u.beta_u, max_relative = 1e-9);
    }

    #[test]
    fn integrate_examples() {
        let u = u010();
        let r = integrate(&[3.0], &u);
        assert_eq!(r.rows[0], vec![0.0, 3.0, 5.0, 10.0]);
        assert_eq!(r.positions[0], 0);
        let r = integrate(&[5.0], &u);
        assert_eq!(r.rows[0], vec![0.0, 5.0, 5.0, 10.0]);
        assert_eq!(r.positions[0], 1);
        let r = integrate(&[12.0], &u);
        assert_eq!(r.rows[0], vec![0.0, 5.0, 10.0, 12.0]);
        assert_eq!(r.positions[0], 2);
        let r = integrate(&[10.0, -1.0], &u);
        assert_eq!(r.positions, vec![1, 0]);
        assert_eq!(r.rows[1], vec![0.0, -1.0, 5.0, 10.0]);
    }

    #[test]
    fn slot_matches_brute_force_scan() {
        let u = Universe::from_bounds(-2.5, 7.25, 9, 1.0);
        let bounds = u.boundaries();
        let brute = |a: f64| -> usize {
            if a > u.beta_u {
                return u.n_intervals;
            }
            let mut best = 0;
            for k in 0..u.n_intervals {
                let upper_ok = if k + 1 == u.n_intervals { a <= bounds[k + 1] } else { a < bounds[k + 1] };
                if bounds[k] <= a && upper_ok {
                    best = k;
                }
            }
            best
        };
        let mut a = -4.0;
        while a < 9.0 {
            assert_eq!(u.slot(a), brute(a), "alpha {a}");
            a += 0.0173;
        }
        for &b in &bounds {
            assert_eq!(u.slot(b), brute(b), "boundary {b}");
        }
    }

    #[test]
    fn replacement_fills_inserted_slots() {
        let u = Universe::from_bounds(-6.0, 8.0, 4, 1.0);
        let raw = integrate(&[2.0, -3.0, 5.0], &u);
        let positions = raw.positions.clone();
        let rep = replace_with_last(raw, 5.0);
        assert_eq!(rep.positions, positions);
        for (row, &k) in rep.rows.iter().zip(&rep.positions) {
            assert_eq!(row[k + 1], 5.0);
        }
        // single-element window: replacement is a no-op
        let raw = integrate(&[2.0], &u);
        assert_eq!(replace_with_last(raw.clone(), 2.0), raw);
    }

    #[test]
    fn padding_balances_sides() {
        // 7 boundaries (N = 6), κ' = 1: 2 boundaries left, 5 right.
        let u = Universe::from_bounds(0.0, 6.0, 6, 1.0);
        let raw = integrate(&[1.5], &u);
        assert_eq!(raw.positions, vec![1]);
        let enc = pad_and_crop(&raw);
        assert_eq!(enc.width, 11);
        assert_eq!(enc.row(0), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(enc.center_col(), 5);
    }

    #[test]
    fn crop_to_shortest_row() {
        // N = 10, 12-element rows; κ' = 4, 3, 2 give padded lengths 13, 15, 17.
        let u = Universe::from_bounds(0.0, 10.0, 10, 1.0);
        let raw = integrate(&[4.5, 3.5, 2.5], &u);
        assert_eq!(raw.positions, vec![4, 3, 2]);
        let raw = replace_with_last(raw, 2.5);
        let enc = pad_and_crop(&raw);
        assert_eq!(enc.width, 13);
        // row 2 is padded with five copies of beta_l, then loses M = 2 per end
        assert_eq!(
            enc.row(2),
            &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
        );
        for r in 0..3 {
            assert_eq!(enc.row(r)[enc.center_col()], 2.5);
        }
    }

    #[test]
    fn padded_lengths_9_11_13_crop_to_9() {
        // N = 7: κ' = 3, 2, 1 pad to 9, 11, 13; M = 0, 1, 2.
        let u = Universe::from_bounds(0.0, 7.0, 7, 1.0);
        let raw = integrate(&[3.5, 2.5, 1.5], &u);
        assert_eq!(raw.positions, vec![3, 2, 1]);
        let enc = pad_and_crop(&raw);
        assert_eq!(enc.width, 9);
        assert_eq!(enc.row(0), &[0.0, 1.0, 2.0, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(enc.row(1), &[0.0, 0.0, 1.0, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(enc.row(2), &[0.0, 0.0, 0.0, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn encoded_width_is_reachable_minimum() {
        for n in 1..20 {
            let u = Universe::from_bounds(0.0, n as f64, n, 1.0);
            let min_padded = (0..n)
                .map(|k| 2 * (k + 1).max(n - k) + 1)
                .min()
                .unwrap();
            assert_eq!(u.encoded_width(), min_padded, "N = {n}");
        }
    }

    #[test]
    fn cbaa_identity_filter() {
        let u = Universe::from_bounds(0.0, 8.0, 8, 1.0);
        let enc = encode_window(&[1.2, 6.5, 3.3], &u);
        for d in [1, 2, 3] {
            let f = cbaa(&enc, &[1.0], d).unwrap();
            assert_eq!(f.width, enc.width);
            assert_eq!(f.data, enc.data);
        }
    }

    #[test]
    fn cbaa_dilation_one_is_plain_correlation() {
        let u = Universe::from_bounds(-3.0, 9.0, 12, 1.0);
        let enc = encode_window(&[0.4, 7.7, -1.0, 2.2], &u);
        let filter = [0.3, -1.1, 0.7];
        let out = cbaa(&enc, &filter, 1).unwrap();
        let c0 = enc.center_col();
        for r in 0..enc.n_rows {
            let row = enc.row(r);
            let right: Vec<f64> = row[c0 + 1..].to_vec();
            let left_out: Vec<f64> = row[..c0].iter().rev().copied().collect();
            let corr = |xs: &[f64]| -> Vec<f64> {
                xs.windows(filter.len()).map(|w| w.iter().zip(&filter).map(|(a, b)| a * b).sum()).collect()
            };
            let rr = corr(&right);
            let mut ll = corr(&left_out);
            ll.reverse();
            let mut expect = ll;
            expect.push(enc.center_value);
            expect.extend(rr);
            let got = out.row(r);
            for (a, b) in got.iter().zip(&expect) {
                assert_relative_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cbaa_output_size_by_enumeration() {
        let u = Universe::from_bounds(0.0, 7.0, 7, 1.0);
        let enc = encode_window(&[3.5, 3.6], &u);
        assert_eq!(enc.width, 9);
        // Count placements of a 2-tap, dilation-2 filter within one half of 4.
        let half = 4;
        let placements = (0..half).filter(|&t| t + 2 < half).count();
        assert_eq!(placements, 2);
        let out = cbaa(&enc, &[1.0, 1.0], 2).unwrap();
        assert_eq!(out.width, 2 * placements + 1);
        assert_eq!(out.width, 5);
    }

    #[test]
    fn cbaa_too_large() {
        let u = Universe::from_bounds(0.0, 2.0, 2, 1.0);
        let enc = encode_window(&[0.5, 1.5], &u);
        assert_eq!(enc.width, 5);
        assert_eq!(
            cbaa(&enc, &[1.0, 1.0, 1.0], 1),
            Err(EncoderError::FilterTooLarge { width: 5, size: 3, dilation: 1, required: 7 })
        );
    }
}
