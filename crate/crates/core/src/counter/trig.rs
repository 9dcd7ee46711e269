use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_RS_DEGREE: u32 = 20;
pub const MAX_CHECK_DEGREE: u32 = 14;

/// `sum_n c_n e^{2 pi i n x}` on the circle, frequencies `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigPolynomial {
    coeffs: Vec<Complex64>,
}

impl TrigPolynomial {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|c| Complex64::new(*c, 0.0)).collect())
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// One past the highest frequency stored.
    pub fn degree_bound(&self) -> usize {
        self.coeffs.len()
    }

    /// Multiplication by `e^{2 pi i shift x}`.
    pub fn modulate(&self, shift: usize) -> Self {
        let mut c = vec![Complex64::new(0.0, 0.0); shift];
        c.extend_from_slice(&self.coeffs);
        Self::new(c)
    }

    /// Convolution on the circle: coefficientwise product.
    pub fn convolve(&self, other: &Self) -> Self {
        let n = self.coeffs.len().min(other.coeffs.len());
        Self::new((0..n).map(|k| self.coeffs[k] * other.coeffs[k]).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Frequencies carrying a nonzero coefficient, as `(lowest, highest)`.
    pub fn support(&self) -> Option<(usize, usize)> {
        let lo = self.coeffs.iter().position(|c| c.norm() != 0.0)?;
        let hi = self.coeffs.iter().rposition(|c| c.norm() != 0.0)?;
        Some((lo, hi))
    }

    /// `(sum |c_n|^2)^{1/2}`, the L^2 norm by Parseval.
    pub fn parseval_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Values at `x_k = k / grid`.
    pub fn evaluate(&self, grid: usize) -> Result<Vec<Complex64>> {
        if grid < self.coeffs.len() {
            return Err(Error::OutOfRange(format!(
                "grid of {grid} points cannot resolve {} frequencies",
                self.coeffs.len()
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); grid];
        buf[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        FftPlanner::new().plan_fft_inverse(grid).process(&mut buf);
        Ok(buf)
    }
}

/// Rudin-Shapiro pair by `P_{m+1} = P_m + e^{2 pi i 2^m x} Q_m`,
/// `Q_{m+1} = P_m - e^{2 pi i 2^m x} Q_m`, `P_0 = Q_0 = 1`.
pub fn rudin_shapiro(m: u32) -> Result<(TrigPolynomial, TrigPolynomial)> {
    if m > MAX_RS_DEGREE {
        return Err(Error::OutOfRange(format!("m must be at most {MAX_RS_DEGREE}, got {m}")));
    }
    let (mut p, mut q) = (vec![1.0], vec![1.0]);
    for _ in 0..m {
        let mut np = p.clone();
        np.extend_from_slice(&q);
        let mut nq = p;
        nq.extend(q.iter().map(|v| -v));
        p = np;
        q = nq;
    }
    Ok((TrigPolynomial::from_real(&p), TrigPolynomial::from_real(&q)))
}

/// `F_m = sum_{n < 2^m} e^{2 pi i n x}`.
pub fn dirichlet(m: u32) -> TrigPolynomial {
    TrigPolynomial::from_real(&vec![1.0; 1 << m])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Parseval,
    Quadrature,
    /// Largest grid value: a lower bound on the supremum.
    GridMax,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub method: NormMethod,
    pub grid: usize,
    /// Quadrature on the given grid for `q = 2`; the doubled grid otherwise.
    pub cross_check: f64,
    /// Relative agreement of `value` and `cross_check`.
    pub agreement: f64,
}

/// Grid quadrature of `(int |P|^q)^{1/q}`, or the grid maximum for `q = inf`.
fn quadrature(values: &[Complex64], q: f64) -> f64 {
    if q.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    }
    let s: f64 = values.iter().map(|v| v.norm().powf(q)).sum();
    (s / values.len() as f64).powf(1.0 / q)
}

/// `L^q(T)` norm of `p`, `q` in `[1, inf]`, on a grid of at least 8 times the
/// degree bound.
pub fn trig_poly_norm(p: &TrigPolynomial, q: f64, grid: usize) -> Result<NormEstimate> {
    if !(q >= 1.0) {
        return Err(Error::OutOfRange(format!("q must lie in [1, inf], got {q}")));
    }
    if grid < 8 * p.degree_bound() {
        return Err(Error::OutOfRange(format!(
            "grid of {grid} points is below 8 x the degree bound {}",
            p.degree_bound()
        )));
    }
    let values = p.evaluate(grid)?;
    let quad = quadrature(&values, q);
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    if q == 2.0 {
        let v = p.parseval_norm();
        return Ok(NormEstimate {
            value: v,
            method: NormMethod::Parseval,
            grid,
            cross_check: quad,
            agreement: rel(v, quad),
        });
    }
    let doubled = quadrature(&p.evaluate(2 * grid)?, q);
    Ok(NormEstimate {
        value: quad,
        method: if q.is_infinite() { NormMethod::GridMax } else { NormMethod::Quadrature },
        grid,
        cross_check: doubled,
        agreement: rel(quad, doubled),
    })
}

/// Default quadrature grid for `P_m`: `2^{m+6}` points.
pub fn default_grid(m: u32) -> usize {
    1 << (m + 6)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RsReport {
    pub m: u32,
    pub grid: usize,
    pub l2: f64,
    pub l2_quadrature: f64,
    pub sup: f64,
    /// `(q, ||P_m||_q)` for the sampled exponents.
    pub lq: Vec<(f64, f64)>,
    /// Largest `| |P_m|^2 + |Q_m|^2 - 2^{m+1} |` relative to `2^{m+1}` on the grid.
    pub conservation: f64,
    pub coefficient_sup: f64,
    pub l2_exact: bool,
    pub sup_bound: bool,
    pub lq_bounds: bool,
    pub coefficients_unimodular: bool,
}

impl FtpTable {
    pub fn passed(&self) -> bool {
        self.band && self.bounded && self.two_way <= 1e-8
    }
}

impl RsReport {
    pub fn passed(&self) -> bool {
        self.l2_exact && self.sup_bound && self.lq_bounds && self.coefficients_unimodular && self.conservation <= 1e-9
    }
}

/// Checks `||P_m||_2 = 2^{m/2}`, `||P_m||_inf <= 2^{(m+1)/2}`,
/// `2^{(m-1)/2} <= ||P_m||_q <= 2^{(m+1)/2}` and `||hat P_m||_inf = 1`.
pub fn verify_rs_properties(m: u32, grid: Option<usize>) -> Result<RsReport> {
    if m > MAX_CHECK_DEGREE {
        return Err(Error::OutOfRange(format!("m must be at most {MAX_CHECK_DEGREE}, got {m}")));
    }
    let grid = grid.unwrap_or_else(|| default_grid(m));
    let (p, q) = rudin_shapiro(m)?;
    let tol = 1e-6;
    let half = |e: f64| 2f64.powf(e / 2.0);
    let l2 = trig_poly_norm(&p, 2.0, grid)?;
    let pv = p.evaluate(grid)?;
    let qv = q.evaluate(grid)?;
    let target = 2f64.powi(m as i32 + 1);
    let conservation = pv
        .iter()
        .zip(&qv)
        .map(|(a, b)| (a.norm_sqr() + b.norm_sqr() - target).abs() / target)
        .fold(0.0, f64::max);
    let sup = quadrature(&pv, f64::INFINITY);
    let lo = half(m as f64 - 1.0) * (1.0 - tol);
    let hi = half(m as f64 + 1.0) * (1.0 + tol);
    let lq: Vec<(f64, f64)> = [1.0, 1.5, 3.0, 4.0]
        .iter()
        .map(|&e| (e, quadrature(&pv, e)))
        .chain(std::iter::once((f64::INFINITY, sup)))
        .collect();
    let coefficient_sup = p.coeffs().iter().fold(0.0f64, |a, c| a.max(c.norm()));
    Ok(RsReport {
        m,
        grid,
        l2: l2.value,
        l2_quadrature: l2.cross_check,
        sup,
        conservation,
        coefficient_sup,
        l2_exact: (l2.value - half(m as f64)).abs() <= 1e-9 * half(m as f64) && l2.agreement <= 1e-9,
        sup_bound: sup <= hi,
        lq_bounds: lq.iter().all(|(_, v)| *v >= lo && *v <= hi),
        coefficients_unimodular: p.coeffs().iter().all(|c| c.im == 0.0 && c.re.abs() == 1.0),
        lq,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvolutionReport {
    pub m: u32,
    /// `P_m * F_m == P_m` coefficient by coefficient.
    pub reproduces: bool,
    pub modulated_reproduces: bool,
    /// `(m', tilde P_m * tilde F_{m'} == 0)` for the neighbouring blocks tried.
    pub orthogonal: Vec<(u32, bool)>,
    /// Frequencies of `tilde P_m` lie in `[2^m, 2^{m+1})`.
    pub support_in_block: bool,
}

impl ConvolutionReport {
    pub fn passed(&self) -> bool {
        self.reproduces && self.modulated_reproduces && self.support_in_block && self.orthogonal.iter().all(|o| o.1)
    }
}

/// `tilde P_m = e^{2 pi i 2^m x} P_m`.
pub fn modulated_rs(m: u32) -> Result<TrigPolynomial> {
    Ok(rudin_shapiro(m)?.0.modulate(1 << m))
}

/// `tilde F_m = e^{2 pi i 2^m x} F_m`.
pub fn modulated_dirichlet(m: u32) -> TrigPolynomial {
    dirichlet(m).modulate(1 << m)
}

fn vanishes(p: &TrigPolynomial) -> bool {
    p.coeffs().iter().all(|c| c.norm() == 0.0)
}

pub fn dirichlet_block_convolution(m: u32) -> Result<ConvolutionReport> {
    if m > MAX_CHECK_DEGREE {
        return Err(Error::OutOfRange(format!("m must be at most {MAX_CHECK_DEGREE}, got {m}")));
    }
    let p = rudin_shapiro(m)?.0;
    let tp = modulated_rs(m)?;
    let lo = m.saturating_sub(2);
    let orthogonal = (lo..=m + 2)
        .filter(|&k| k != m && k <= MAX_CHECK_DEGREE)
        .map(|k| (k, vanishes(&tp.convolve(&modulated_dirichlet(k)))))
        .collect();
    let support_in_block = tp.support() == Some((1 << m, (1 << (m + 1)) - 1));
    Ok(ConvolutionReport {
        m,
        reproduces: p.convolve(&dirichlet(m)) == p,
        modulated_reproduces: tp.convolve(&modulated_dirichlet(m)) == tp,
        orthogonal,
        support_in_block,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FtpRow {
    pub m: u32,
    /// `||T f_m||_1` by quadrature of the full convolution.
    pub norm: f64,
    /// The same value from the block coefficient times `||P_m||_1`.
    pub block_norm: f64,
    /// `norm m^5 2^{m(1/r - 1/p)}`.
    pub normalised: f64,
    /// `||f_m||_r` by quadrature.
    pub input_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FtpTable {
    pub r: f64,
    pub p: f64,
    pub rows: Vec<FtpRow>,
    pub median: f64,
    /// Every normalised value lies in `[median / 4, 4 median]`.
    pub band: bool,
    /// `sum_m sup|coefficient| 2^{m(1/r - 1/2)}`, an upper bound for `||T||_{L^r -> L^2}`.
    pub operator_bound: f64,
    pub max_norm: f64,
    /// `||T f_m||_1 <= operator_bound ||f_m||_r` on every row.
    pub bounded: bool,
    /// Largest disagreement between the two evaluations of `||T f_m||_1`.
    pub two_way: f64,
}

/// `T` is convolution with `sum_{m <= m_max} m^{-2} 2^{m/2 - m/r} tilde P_m` and
/// `f_m = m^{-3} 2^{-m/p'} tilde F_m`; tabulates `||T f_m||_1` for
/// `m_min <= m <= m_max`.
pub fn ftp_growth_experiment(r: f64, p: f64, m_min: u32, m_max: u32) -> Result<FtpTable> {
    if !(r > 1.0 && r <= 2.0) || !(p >= 1.0 && p <= r) {
        return Err(Error::OutOfRange(format!("need 1 < r <= 2 and 1 <= p <= r, got r = {r}, p = {p}")));
    }
    if m_min == 0 || m_min > m_max || m_max > MAX_CHECK_DEGREE {
        return Err(Error::OutOfRange(format!(
            "need 1 <= m_min <= m_max <= {MAX_CHECK_DEGREE}, got {m_min}..{m_max}"
        )));
    }
    let inv_pd = 1.0 - 1.0 / p;
    let weight = |m: u32| (m as f64).powi(-2) * 2f64.powf(m as f64 * (0.5 - 1.0 / r));
    let mut kernel = vec![Complex64::new(0.0, 0.0); 1 << (m_max + 1)];
    let mut operator_bound = 0.0;
    for m in 1..=m_max {
        let block = modulated_rs(m)?;
        let w = weight(m);
        for (k, c) in block.coeffs().iter().enumerate().skip(1 << m) {
            kernel[k] += c * w;
        }
        operator_bound += w * 2f64.powf(m as f64 * (1.0 / r - 0.5));
    }
    let kernel = TrigPolynomial::new(kernel);
    let mut rows = Vec::new();
    for m in m_min..=m_max {
        let f = modulated_dirichlet(m).scaled((m as f64).powi(-3) * 2f64.powf(-(m as f64) * inv_pd));
        let tf = kernel.convolve(&f);
        let grid = 1 << (m + 7);
        let norm = quadrature(&tf.evaluate(grid)?, 1.0);
        let p_m = rudin_shapiro(m)?.0;
        let c = weight(m) * (m as f64).powi(-3) * 2f64.powf(-(m as f64) * inv_pd);
        let block_norm = c * quadrature(&p_m.evaluate(grid)?, 1.0);
        let normalised = norm * (m as f64).powi(5) * 2f64.powf(m as f64 * (1.0 / r - 1.0 / p));
        let input_norm = quadrature(&f.evaluate(grid)?, r);
        rows.push(FtpRow {
            m,
            norm,
            block_norm,
            normalised,
            input_norm,
        });
    }
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.normalised).collect();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
    let band = rows.iter().all(|r| r.normalised >= median / 4.0 && r.normalised <= 4.0 * median);
    let two_way = rows
        .iter()
        .map(|r| (r.norm - r.block_norm).abs() / r.block_norm)
        .fold(0.0, f64::max);
    let bounded = rows.iter().all(|row| row.norm <= operator_bound * row.input_norm * (1.0 + 1e-9));
    Ok(FtpTable {
        r,
        p,
        bounded,
        median,
        band,
        operator_bound,
        max_norm: rows.iter().fold(0.0f64, |a, r| a.max(r.norm)),
        two_way,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_pairs() {
        let (p0, q0) = rudin_shapiro(0).unwrap();
        assert_eq!(p0, TrigPolynomial::from_real(&[1.0]));
        assert_eq!(q0, TrigPolynomial::from_real(&[1.0]));
        let (p1, q1) = rudin_shapiro(1).unwrap();
        assert_eq!(p1, TrigPolynomial::from_real(&[1.0, 1.0]));
        assert_eq!(q1, TrigPolynomial::from_real(&[1.0, -1.0]));
        let (p3, _) = rudin_shapiro(3).unwrap();
        assert_eq!(p3.degree_bound(), 8);
        assert!(p3.coeffs().iter().all(|c| c.re.abs() == 1.0 && c.im == 0.0));
        assert!(rudin_shapiro(21).is_err());
    }

    #[test]
    fn norms() {
        let one = TrigPolynomial::from_real(&[1.0]);
        for q in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert!((trig_poly_norm(&one, q, 8).unwrap().value - 1.0).abs() < 1e-15);
        }
        let (p3, _) = rudin_shapiro(3).unwrap();
        let l2 = trig_poly_norm(&p3, 2.0, 512).unwrap();
        assert!((l2.value - 2f64.powf(1.5)).abs() < 1e-9);
        let l1 = trig_poly_norm(&p3, 1.0, 512).unwrap().value;
        assert!((2.0..=4.0).contains(&l1));
        assert!(trig_poly_norm(&p3, 2.0, 32).is_err());
    }

    #[test]
    fn properties_hold() {
        for m in 0..=10 {
            let rep = verify_rs_properties(m, None).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
    }

    #[test]
    fn convolution_identities() {
        for m in 0..=6 {
            assert!(dirichlet_block_convolution(m).unwrap().passed());
        }
        let t = modulated_rs(2).unwrap().convolve(&modulated_dirichlet(3));
        assert!(t.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn ftp_rates() {
        let t = ftp_growth_experiment(2.0, 1.0, 4, 10).unwrap();
        assert!(t.passed(), "{t:?}");
        assert!(t.two_way < 1e-8);
        assert!(t.operator_bound < std::f64::consts::PI.powi(2) / 6.0);
        let flat = ftp_growth_experiment(1.5, 1.5, 4, 10).unwrap();
        assert!(flat.passed());
        assert!(flat.max_norm <= 2f64.sqrt());
    }
}
