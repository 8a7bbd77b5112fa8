//! Derivative-free Nelder-Mead simplex minimizer in two dimensions.
//!
//! Objectives return `f64::INFINITY` outside their feasible region; the
//! simplex then contracts back toward feasible vertices.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Outcome {
    pub x: [f64; 2],
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn lerp(from: [f64; 2], to: [f64; 2], t: f64) -> [f64; 2] {
    [
        from[0] + t * (to[0] - from[0]),
        from[1] + t * (to[1] - from[1]),
    ]
}

fn diameter(simplex: &[([f64; 2], f64); 3]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in (i + 1)..3 {
            let dx = simplex[i].0[0] - simplex[j].0[0];
            let dy = simplex[i].0[1] - simplex[j].0[1];
            d = d.max(dx.hypot(dy));
        }
    }
    d
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of size `step`.
/// Stops once the simplex diameter falls below `tol` or after `max_iter` steps.
pub(crate) fn nelder_mead<F>(
    f: F,
    x0: [f64; 2],
    step: [f64; 2],
    tol: f64,
    max_iter: usize,
) -> Outcome
where
    F: Fn([f64; 2]) -> f64,
{
    let eval = |x: [f64; 2]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let v1 = [x0[0] + step[0], x0[1]];
    let v2 = [x0[0], x0[1] + step[1]];
    let mut simplex = [(x0, eval(x0)), (v1, eval(v1)), (v2, eval(v2))];

    let mut iterations = 0;
    loop {
        // Stable sort keeps x0 ahead of ties, so the start point is never lost.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex) < tol {
            return Outcome {
                x: simplex[0].0,
                fx: simplex[0].1,
                iterations,
                converged: true,
            };
        }
        if iterations == max_iter {
            return Outcome {
                x: simplex[0].0,
                fx: simplex[0].1,
                iterations,
                converged: false,
            };
        }
        iterations += 1;

        let (best, worst) = (simplex[0], simplex[2]);
        let centroid = lerp(simplex[0].0, simplex[1].0, 0.5);
        let reflected = lerp(centroid, worst.0, -REFLECT);
        let f_reflected = eval(reflected);

        if f_reflected < best.1 {
            let expanded = lerp(centroid, worst.0, -EXPAND);
            let f_expanded = eval(expanded);
            simplex[2] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < simplex[1].1 {
            simplex[2] = (reflected, f_reflected);
            continue;
        }

        let (contracted, f_contracted) = if f_reflected < worst.1 {
            let c = lerp(centroid, reflected, CONTRACT);
            (c, eval(c))
        } else {
            let c = lerp(centroid, worst.0, CONTRACT);
            (c, eval(c))
        };
        if f_contracted < worst.1.min(f_reflected) {
            simplex[2] = (contracted, f_contracted);
            continue;
        }

        for vertex in simplex.iter_mut().skip(1) {
            let x = lerp(best.0, vertex.0, SHRINK);
            *vertex = (x, eval(x));
        }
    }
}
