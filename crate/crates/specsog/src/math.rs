//! Small numerical helpers shared across the solver stages.

use statrs::function::gamma::ln_gamma;

/// Modified Bessel function of the first kind, order zero.
///
/// The power series is well conditioned (all terms positive) and free of
/// overflow up to x ~ 700, so it is used for the whole range the windows
/// need; the Poincare asymptotic series only takes over at x = 500 where its
/// smallest term is far below 1e-16 relative. (At the textbook switch point
/// x = 15 the asymptotic tail still contributes ~1e-9.)
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x < 500.0 {
        // sum_k (x^2/4)^k / (k!)^2
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0f64;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-18 {
                return sum;
            }
            k += 1.0;
        }
    } else {
        // I0(x) = e^x / sqrt(2 pi x) * sum_k a_k with
        // a_0 = 1, a_{k+1} = a_k * (2k+1)^2 / (8 (k+1) x)
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut k = 0.0f64;
        loop {
            let next = term * (2.0 * k + 1.0) * (2.0 * k + 1.0) / (8.0 * (k + 1.0) * x);
            if next >= term || next < sum * 1e-18 {
                sum += next;
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        x.exp() * sum / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

/// ln(n!) without overflow.
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Scaled complementary error function e^{x^2} erfc(x).
///
/// Small x: direct product (erfc is well conditioned there). x >= 1: Gauss
/// continued fraction, stable where e^{x^2} would lose relative accuracy.
/// Negative x via erfcx(-x) = 2 e^{x^2} - erfcx(x) (may overflow, as the
/// function itself does).
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 2.5 {
        return (x * x).exp() * statrs::function::erf::erfc(x);
    }
    // erfcx(x) = (1/sqrt(pi)) / (x + 1/(2x + 2/(x + 3/(2x + ...))))
    let mut cf = 0.0;
    for k in (1..=250).rev() {
        let den = if k % 2 == 1 { 2.0 * x } else { x };
        cf = k as f64 / (den + cf);
    }
    1.0 / (std::f64::consts::PI.sqrt() * (x + cf))
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Newton iteration from the Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrate `f` over [a, b] with a composite Gauss-Legendre rule
/// (`order` points per panel, `panels` panels).
pub fn integrate_gl<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, order: usize, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            acc += w * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

/// Polynomial extrapolation of a sequence to its limit.
///
/// Given samples `(x_k, y_k)` with x_k -> 0 and y(x) = y(0) + c1 x + c2 x^2 + ...,
/// returns the Neville-tableau estimate of y(0) together with a crude error
/// indicator (the difference between the last two tableau columns).
pub fn neville_extrapolate(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert_eq!(n, ys.len());
    assert!(n >= 1);
    let mut tab = ys.to_vec();
    let mut last = tab[0];
    let mut err = f64::INFINITY;
    for m in 1..n {
        for i in 0..n - m {
            tab[i] = (xs[i + m] * tab[i] - xs[i] * tab[i + 1]) / (xs[i + m] - xs[i]);
        }
        err = (tab[0] - last).abs();
        last = tab[0];
    }
    (last, err)
}

/// Least-squares straight line y = a + b x; returns (a, b).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    (a, b)
}
