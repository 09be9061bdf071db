//! Small summary statistics used by the estimators and sweep drivers.
//!
//! Sums run in slice order so results never depend on how samples were
//! produced.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub std_error: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary { count: 0, mean: f64::NAN, std_dev: f64::NAN, std_error: f64::NAN };
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let std_dev = if n > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    Summary { count: n, mean, std_dev, std_error: std_dev / nf.sqrt() }
}

/// Ordinary least-squares line with classical standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

/// Needs at least two distinct `x` values; standard errors need three points.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len(), "x and y lengths differ");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, intercept_se) = if xs.len() > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let s2 = rss / (n - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / n + mx * mx / sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    LinearFit { slope, intercept, slope_se, intercept_se }
}
