//! Exact Euclidean projections onto the feasible sets of the subproblems.

/// Project onto `{v >= 0, sum v <= cap}` in place.
pub fn capped_simplex(v: &mut [f64], cap: f64) {
    let mut sum = 0.0;
    for e in v.iter_mut() {
        *e = e.max(0.0);
        sum += *e;
    }
    if sum <= cap {
        return;
    }
    // Projection onto the face sum = cap (Held, Wolfe and Crowder).
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - cap) / (i + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    for e in v.iter_mut() {
        *e = (*e - tau).max(0.0);
    }
}

/// Project each RB column of a row-major `k x b` matrix onto
/// `{x >= 0, sum_k x <= 1}`.
pub fn rb_columns(x: &mut [f64], k: usize, b: usize) {
    let mut col = vec![0.0; k];
    for j in 0..b {
        for i in 0..k {
            col[i] = x[i * b + j];
        }
        capped_simplex(&mut col, 1.0);
        for i in 0..k {
            x[i * b + j] = col[i];
        }
    }
}

/// Project onto `[0, 1]^B ∩ {u · w >= req}` in place, with `u >= 0`.
/// Returns `false` (leaving `w ≡ 1`) when even the full box misses `req`.
pub fn box_halfspace(w: &mut [f64], u: &[f64], req: f64) -> bool {
    let clip = |y: f64| y.clamp(0.0, 1.0);
    let dot = |w: &[f64]| w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
    let top: f64 = u.iter().sum();
    if top < req {
        w.fill(1.0);
        return false;
    }
    let clipped: Vec<f64> = w.iter().map(|&y| clip(y)).collect();
    if dot(&clipped) >= req {
        w.copy_from_slice(&clipped);
        return true;
    }
    // The KKT point is clip(y + lambda u) for the lambda > 0 that makes the
    // half-space active; phi(lambda) is piecewise linear and nondecreasing.
    let y = w.to_vec();
    let phi = |lam: f64| -> f64 { y.iter().zip(u).map(|(&yi, &ui)| ui * clip(yi + lam * ui)).sum() };
    let mut bps: Vec<f64> = Vec::with_capacity(2 * y.len());
    for (&yi, &ui) in y.iter().zip(u) {
        if ui > 0.0 {
            for bp in [-yi / ui, (1.0 - yi) / ui] {
                if bp > 0.0 {
                    bps.push(bp);
                }
            }
        }
    }
    bps.sort_unstable_by(|a, b| a.total_cmp(b));
    bps.dedup();
    // First breakpoint where phi reaches req.
    let (mut lo, mut hi) = (0usize, bps.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if phi(bps[mid]) >= req {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let right = bps.get(lo).copied().unwrap_or(0.0);
    let left = if lo == 0 { 0.0 } else { bps[lo - 1] };
    let (pl, pr) = (phi(left), phi(right));
    let lam = if pr > pl {
        left + (req - pl) * (right - left) / (pr - pl)
    } else {
        right
    };
    for (wi, (&yi, &ui)) in w.iter_mut().zip(y.iter().zip(u)) {
        *wi = clip(yi + lam * ui);
    }
    // Guard against round-off leaving the constraint a hair short.
    let short = req - dot(w);
    if short > 0.0 {
        for i in 0..w.len() {
            if u[i] > 0.0 && w[i] < 1.0 {
                w[i] = (w[i] + (req - dot(w)) / u[i]).min(1.0);
                if dot(w) >= req {
                    break;
                }
            }
        }
    }
    true
}
