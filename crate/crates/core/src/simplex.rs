//! Derivative-free Nelder–Mead minimization.

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: Vec<f64>,
    /// Stop once the spread of vertex values falls below this (absolute).
    pub f_tol: f64,
    /// ... and the simplex fits in a box of this size.
    pub x_tol: f64,
}

impl SimplexOptions {
    pub fn new(max_evals: usize, initial_step: Vec<f64>) -> Self {
        Self {
            max_evals,
            initial_step,
            f_tol: 1e-10,
            x_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` starting from `x0`. NaN objective values are treated as `+inf`.
///
/// Never evaluates `f` more than `opts.max_evals` times (at least once).
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(opts.initial_step.len(), n, "initial step has wrong dimension");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    verts.push(x0.to_vec());
    vals.push(eval(x0, &mut evals));
    if n == 0 {
        return Minimum {
            x: x0.to_vec(),
            value: vals[0],
            evals,
        };
    }
    for i in 0..n {
        if evals >= opts.max_evals {
            break;
        }
        let mut v = x0.to_vec();
        v[i] += opts.initial_step[i];
        vals.push(eval(&v, &mut evals));
        verts.push(v);
    }
    if verts.len() < n + 1 {
        let best = argmin(&vals);
        return Minimum {
            x: verts[best].clone(),
            value: vals[best],
            evals,
        };
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut order: Vec<usize> = (0..=n).collect();
    while evals < opts.max_evals {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let spread = (vals[worst] - vals[best]).abs();
        let size = verts
            .iter()
            .flat_map(|v| v.iter().zip(&verts[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if vals[best].is_finite() && spread <= opts.f_tol && size <= opts.x_tol {
            break;
        }

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&verts[i]) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&verts[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < vals[best] {
            if evals >= opts.max_evals {
                verts[worst] = xr;
                vals[worst] = fr;
                break;
            }
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                verts[worst] = xe;
                vals[worst] = fe;
            } else {
                verts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            verts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        if evals >= opts.max_evals {
            break;
        }
        let (xc, fc) = if fr < vals[worst] {
            let xc = along(rho * alpha);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < vals[worst].min(fr) {
            verts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        // shrink toward the best vertex
        let anchor = verts[best].clone();
        for &i in &order[1..] {
            if evals >= opts.max_evals {
                break;
            }
            let v: Vec<f64> = anchor.iter().zip(&verts[i]).map(|(a, x)| a + sigma * (x - a)).collect();
            vals[i] = eval(&v, &mut evals);
            verts[i] = v;
        }
    }

    let best = argmin(&vals);
    Minimum {
        x: verts[best].clone(),
        value: vals[best],
        evals,
    }
}

fn argmin(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if v.total_cmp(&vals[best]).is_lt() {
            best = i;
        }
    }
    best
}
