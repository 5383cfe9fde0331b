use super::skyline::SkylineLdl;
use super::sparse::{norm_inf, CsrMatrix};
use super::{check_kkt, KktResiduals, QpError, QpSettings, QpSolution, QpStatus, QuadraticProgram};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const EQ_RHO_FACTOR: f64 = 1e3;
const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_RHO: f64 = 1e6;
const POLISH_ITERS: usize = 40;
const POLISH_ROUNDS: usize = 4;
/// First iteration at which a polish is attempted mid-run; later attempts
/// follow at doubling intervals.
const EARLY_POLISH_START: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowKind {
    Free,
    Equality,
    Inequality,
}

fn row_kind(l: f64, u: f64) -> RowKind {
    if l == f64::NEG_INFINITY && u == f64::INFINITY {
        RowKind::Free
    } else if l.is_finite() && u.is_finite() && u - l <= 1e-12 * (1.0 + l.abs().max(u.abs())) {
        RowKind::Equality
    } else {
        RowKind::Inequality
    }
}

fn clamp_scaling(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

/// Equilibrated copy of the problem. Original quantities are recovered as
/// `x = d.x_s`, `Ax = (A_s x_s) / e`, `y = e.y_s / c`.
struct Scaled {
    p: CsrMatrix,
    q: Vec<f64>,
    a: CsrMatrix,
    at: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

impl Scaled {
    fn new(qp: &QuadraticProgram, iters: usize) -> Self {
        let n = qp.n();
        let m = qp.m();
        let mut p = qp.h().clone();
        let mut a = qp.a().clone();
        let mut q = qp.f().to_vec();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;
        for _ in 0..iters {
            let pn = p.col_norms();
            let an = a.col_norms();
            let dv: Vec<f64> = pn
                .iter()
                .zip(&an)
                .map(|(x, y)| 1.0 / clamp_scaling(x.max(*y)).sqrt())
                .collect();
            let ev: Vec<f64> = a
                .row_norms()
                .iter()
                .map(|x| 1.0 / clamp_scaling(*x).sqrt())
                .collect();
            p.scale(&dv, &dv);
            a.scale(&ev, &dv);
            for ((qi, di), dd) in q.iter_mut().zip(&dv).zip(d.iter_mut()) {
                *qi *= di;
                *dd *= di;
            }
            for (ei, ee) in ev.iter().zip(e.iter_mut()) {
                *ee *= ei;
            }
            let pn = p.col_norms();
            let mean = if n == 0 { 0.0 } else { pn.iter().sum::<f64>() / n as f64 };
            let gamma = 1.0 / clamp_scaling(mean.max(norm_inf(&q)));
            let ones = vec![gamma; n];
            let unit = vec![1.0; n];
            p.scale(&ones, &unit);
            q.iter_mut().for_each(|v| *v *= gamma);
            c *= gamma;
        }
        let l = qp.lower().iter().zip(&e).map(|(v, s)| v * s).collect();
        let u = qp.upper().iter().zip(&e).map(|(v, s)| v * s).collect();
        let at = a.transpose();
        Self {
            p,
            q,
            a,
            at,
            l,
            u,
            d,
            e,
            c,
        }
    }

    fn unscale_x(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().zip(&self.d).map(|(v, s)| v * s).collect()
    }

    fn unscale_y(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().zip(&self.e).map(|(v, s)| v * s / self.c).collect()
    }
}

/// Symbolic pattern of `P + sigma I + A' R A` (and of `P + delta I + rho A'A`).
fn kkt_pattern(s: &Scaled) -> SkylineLdl {
    let n = s.p.ncols();
    let mut entries: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for &j in s.p.row(i).0 {
            entries.push((i, j));
        }
    }
    for i in 0..s.a.nrows() {
        let cols = s.a.row(i).0;
        for (k, &ci) in cols.iter().enumerate() {
            for &cj in &cols[..k] {
                entries.push((ci, cj));
            }
        }
    }
    SkylineLdl::new(n, entries)
}

fn assemble(k: &mut SkylineLdl, s: &Scaled, diag: f64, rho: &[f64], rows: Option<&[bool]>) {
    k.clear();
    let n = s.p.ncols();
    for i in 0..n {
        let (cols, vals) = s.p.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j <= i {
                k.add(i, j, v);
            }
        }
        k.add(i, i, diag);
    }
    for r in 0..s.a.nrows() {
        if rows.is_some_and(|act| !act[r]) {
            continue;
        }
        let (cols, vals) = s.a.row(r);
        for (a, (&ci, &vi)) in cols.iter().zip(vals).enumerate() {
            for (&cj, &vj) in cols[..=a].iter().zip(&vals[..=a]) {
                k.add(ci, cj, rho[r] * vi * vj);
            }
        }
    }
}

fn rho_vector(s: &Scaled, rho: f64) -> Vec<f64> {
    s.l.iter()
        .zip(&s.u)
        .map(|(&l, &u)| match row_kind(l, u) {
            RowKind::Free => RHO_MIN,
            RowKind::Equality => EQ_RHO_FACTOR * rho,
            RowKind::Inequality => rho,
        })
        .collect()
}

fn div_norm(v: &[f64], s: &[f64]) -> f64 {
    v.iter().zip(s).fold(0.0f64, |m, (a, b)| m.max((a / b).abs()))
}

fn mul_norm(v: &[f64], s: &[f64]) -> f64 {
    v.iter().zip(s).fold(0.0f64, |m, (a, b)| m.max((a * b).abs()))
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    /// Scaled-space normalized residual ratio, used for step-size updates.
    ratio: f64,
}

fn residuals(s: &Scaled, x: &[f64], z: &[f64], y: &[f64], set: &QpSettings) -> Residuals {
    let ax = s.a.mul(x);
    let px = s.p.mul(x);
    let aty = s.at.mul(y);
    let diff: Vec<f64> = ax.iter().zip(z).map(|(a, b)| a - b).collect();
    let grad: Vec<f64> = px
        .iter()
        .zip(&aty)
        .zip(&s.q)
        .map(|((a, b), c)| a + b + c)
        .collect();
    let prim = div_norm(&diff, &s.e);
    let dual = div_norm(&grad, &s.d) / s.c;
    let eps_prim = set.eps_abs + set.eps_rel * div_norm(&ax, &s.e).max(div_norm(z, &s.e));
    let eps_dual = set.eps_abs
        + set.eps_rel
            * div_norm(&px, &s.d)
                .max(div_norm(&aty, &s.d))
                .max(div_norm(&s.q, &s.d))
            / s.c;
    let tiny = 1e-30;
    let pn = norm_inf(&diff) / norm_inf(&ax).max(norm_inf(z)).max(tiny);
    let dn = norm_inf(&grad) / norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&s.q)).max(tiny);
    Residuals {
        prim,
        dual,
        eps_prim,
        eps_dual,
        ratio: if dn > 0.0 { pn / dn } else { 1.0 },
    }
}

/// Checks whether the change in duals certifies primal infeasibility. On
/// success returns the certificate in original units.
fn infeasibility(s: &Scaled, dy: &mut [f64], eps: f64) -> Option<Vec<f64>> {
    for ((v, &l), &u) in dy.iter_mut().zip(&s.l).zip(&s.u) {
        if (*v > 0.0 && u == f64::INFINITY) || (*v < 0.0 && l == f64::NEG_INFINITY) {
            *v = 0.0;
        }
    }
    let norm = mul_norm(dy, &s.e);
    if norm < 1e-30 {
        return None;
    }
    let support: f64 = dy
        .iter()
        .zip(s.l.iter().zip(&s.u))
        .map(|(&v, (&l, &u))| {
            if v > 0.0 {
                u * v
            } else if v < 0.0 {
                l * v
            } else {
                0.0
            }
        })
        .sum();
    if support >= -eps * norm {
        return None;
    }
    let aty = s.at.mul(dy);
    if div_norm(&aty, &s.d) > eps * norm {
        return None;
    }
    Some(dy.iter().zip(&s.e).map(|(v, e)| v * e / norm).collect())
}

pub fn solve_qp(qp: &QuadraticProgram, settings: &QpSettings) -> Result<QpSolution, QpError> {
    settings.validate()?;
    let n = qp.n();
    let m = qp.m();
    if n == 0 {
        return Ok(trivial(qp));
    }
    let s = Scaled::new(qp, settings.scaling_iters);
    let mut rho = settings.rho;
    let mut rho_vec = rho_vector(&s, rho);
    let mut k = kkt_pattern(&s);
    assemble(&mut k, &s, settings.sigma, &rho_vec, None);
    let mut breakdown = k.factor().is_err();

    let mut x = vec![0.0; n];
    let mut z: Vec<f64> = (0..m).map(|i| 0.0f64.clamp(s.l[i], s.u[i])).collect();
    let mut y = vec![0.0; m];
    let mut y_prev = y.clone();
    let mut rhs = vec![0.0; n];
    let mut tmp = vec![0.0; m];
    let mut zt = vec![0.0; m];
    let alpha = settings.alpha;
    let mut status = QpStatus::MaxIter;
    let mut certificate = None;
    let mut iterations = 0;
    let mut next_polish = EARLY_POLISH_START;

    while iterations < settings.max_iter && !breakdown {
        iterations += 1;
        y_prev.copy_from_slice(&y);
        for i in 0..m {
            tmp[i] = rho_vec[i] * z[i] - y[i];
        }
        s.at.mul_vec(&tmp, &mut rhs);
        for i in 0..n {
            rhs[i] += settings.sigma * x[i] - s.q[i];
        }
        k.solve_in_place(&mut rhs);
        s.a.mul_vec(&rhs, &mut zt);
        for i in 0..n {
            x[i] = alpha * rhs[i] + (1.0 - alpha) * x[i];
        }
        for i in 0..m {
            let zr = alpha * zt[i] + (1.0 - alpha) * z[i];
            let zn = (zr + y[i] / rho_vec[i]).clamp(s.l[i], s.u[i]);
            y[i] += rho_vec[i] * (zr - zn);
            z[i] = zn;
        }

        let review = settings.adaptive_interval > 0 && iterations % settings.adaptive_interval == 0;
        if iterations % settings.check_interval != 0 && !review && iterations != settings.max_iter {
            continue;
        }
        let r = residuals(&s, &x, &z, &y, settings);
        if r.prim <= r.eps_prim && r.dual <= r.eps_dual {
            status = QpStatus::Solved;
            break;
        }
        let mut dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
        if let Some(cert) = infeasibility(&s, &mut dy, settings.eps_infeasible) {
            status = QpStatus::Infeasible;
            certificate = Some(cert);
            break;
        }
        if settings.polish && iterations >= next_polish {
            next_polish *= 2;
            // a shortcut past the stopping test must also meet the absolute tolerance
            let tight = |eps: f64| if settings.eps_abs > 0.0 { eps.min(settings.eps_abs) } else { eps };
            let limits = (tight(r.eps_prim), tight(r.eps_dual));
            if let Some((xo, yo, kkt)) = try_polish(qp, &s, &k, &x, &z, &y, limits)? {
                return Ok(QpSolution {
                    objective: qp.objective(&xo),
                    x: xo,
                    y: yo,
                    status: QpStatus::Solved,
                    primal_residual: kkt.primal,
                    dual_residual: kkt.dual,
                    iterations,
                    polished: true,
                    certificate: None,
                });
            }
        }
        if review && (r.ratio > settings.adaptive_ratio || r.ratio < 1.0 / settings.adaptive_ratio) {
            let new_rho = (rho * r.ratio.sqrt()).clamp(RHO_MIN, RHO_MAX);
            if new_rho != rho {
                rho = new_rho;
                rho_vec = rho_vector(&s, rho);
                assemble(&mut k, &s, settings.sigma, &rho_vec, None);
                breakdown = k.factor().is_err();
            }
        }
    }

    if status == QpStatus::Infeasible {
        let xo = s.unscale_x(&x);
        let yo = s.unscale_y(&y);
        let kkt = check_kkt(qp, &xo, &yo)?;
        return Ok(QpSolution {
            objective: qp.objective(&xo),
            x: xo,
            y: yo,
            status,
            primal_residual: kkt.primal,
            dual_residual: kkt.dual,
            iterations,
            polished: false,
            certificate,
        });
    }

    let mut xo = s.unscale_x(&x);
    let mut yo = s.unscale_y(&y);
    let mut kkt = check_kkt(qp, &xo, &yo)?;
    let mut polished = false;
    if settings.polish && !breakdown {
        let r = residuals(&s, &x, &z, &y, settings);
        if let Some((xpo, ypo, pk)) = try_polish(qp, &s, &k, &x, &z, &y, (r.eps_prim, r.eps_dual))? {
            if pk.primal + pk.dual <= kkt.primal + kkt.dual || status != QpStatus::Solved {
                xo = xpo;
                yo = ypo;
                kkt = pk;
                polished = true;
                status = QpStatus::Solved;
            }
        }
    }
    Ok(QpSolution {
        objective: qp.objective(&xo),
        x: xo,
        y: yo,
        status,
        primal_residual: kkt.primal,
        dual_residual: kkt.dual,
        iterations,
        polished,
        certificate: None,
    })
}

/// Primal, dual and residuals of an accepted polish, in original units.
type Polished = (Vec<f64>, Vec<f64>, KktResiduals);

/// Polishes the current iterate and returns it in original units if it
/// meets the given primal and dual limits.
fn try_polish(
    qp: &QuadraticProgram,
    s: &Scaled,
    pattern: &SkylineLdl,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    (eps_prim, eps_dual): (f64, f64),
) -> Result<Option<Polished>, QpError> {
    let Some((xp, yp)) = polish(s, pattern, x, z, y) else {
        return Ok(None);
    };
    let (xo, yo) = (s.unscale_x(&xp), s.unscale_y(&yp));
    let kkt = check_kkt(qp, &xo, &yo)?;
    Ok((kkt.primal <= eps_prim && kkt.dual <= eps_dual).then_some((xo, yo, kkt)))
}

fn trivial(qp: &QuadraticProgram) -> QpSolution {
    let feasible = qp.lower().iter().zip(qp.upper()).all(|(&l, &u)| l <= 0.0 && 0.0 <= u);
    let m = qp.m();
    let certificate = (!feasible).then(|| {
        qp.lower()
            .iter()
            .zip(qp.upper())
            .map(|(&l, &u)| {
                if l > 0.0 {
                    -1.0
                } else if u < 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    });
    QpSolution {
        x: Vec::new(),
        y: vec![0.0; m],
        status: if feasible { QpStatus::Solved } else { QpStatus::Infeasible },
        primal_residual: qp
            .lower()
            .iter()
            .zip(qp.upper())
            .fold(0.0f64, |acc, (&l, &u)| acc.max(l.max(0.0)).max(-u.min(0.0))),
        dual_residual: 0.0,
        objective: 0.0,
        iterations: 0,
        polished: false,
        certificate,
    }
}

/// Guesses the active set from the ADMM iterate, solves the resulting
/// equality-constrained problem with a proximal method of multipliers and
/// refines the guess a few times. Works in scaled space.
fn polish(s: &Scaled, pattern: &SkylineLdl, x0: &[f64], z: &[f64], y0: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = z.len();
    // +1 upper, -1 lower, 0 inactive
    let mut side = vec![0i8; m];
    let mut equality = vec![false; m];
    for i in 0..m {
        match row_kind(s.l[i], s.u[i]) {
            RowKind::Free => {}
            RowKind::Equality => equality[i] = true,
            RowKind::Inequality => {
                if z[i] - s.l[i] < -y0[i] {
                    side[i] = -1;
                } else if s.u[i] - z[i] < y0[i] {
                    side[i] = 1;
                }
            }
        }
    }
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    for _ in 0..POLISH_ROUNDS {
        let (xn, yn) = polish_solve(s, pattern, &equality, &side, &x, &y)?;
        x = xn;
        y = yn;
        let ax = s.a.mul(&x);
        let ymax = norm_inf(&y);
        let mut changed = false;
        for i in 0..m {
            if equality[i] || row_kind(s.l[i], s.u[i]) == RowKind::Free {
                continue;
            }
            let wrong_sign = f64::from(side[i]) * y[i] < -1e-12 * ymax;
            let tol = 1e-9 * (1.0 + ax[i].abs());
            if side[i] != 0 && wrong_sign {
                side[i] = 0;
                changed = true;
            } else if side[i] == 0 && ax[i] > s.u[i] + tol {
                side[i] = 1;
                changed = true;
            } else if side[i] == 0 && ax[i] < s.l[i] - tol {
                side[i] = -1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // a multiplier may only push against the bound that is held
    for i in 0..m {
        y[i] = match side[i] {
            1 => y[i].max(0.0),
            -1 => y[i].min(0.0),
            _ if equality[i] => y[i],
            _ => 0.0,
        };
    }
    Some((x, y))
}

fn polish_solve(
    s: &Scaled,
    pattern: &SkylineLdl,
    equality: &[bool],
    side: &[i8],
    x0: &[f64],
    y0: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = x0.len();
    let m = side.len();
    let active: Vec<bool> = (0..m).map(|i| equality[i] || side[i] != 0).collect();
    let target: Vec<f64> = (0..m)
        .map(|i| match side[i] {
            1 => s.u[i],
            -1 => s.l[i],
            _ if equality[i] => s.u[i],
            _ => 0.0,
        })
        .collect();
    let rho = vec![POLISH_RHO; m];
    let mut k = pattern.clone();
    assemble(&mut k, s, POLISH_DELTA, &rho, Some(&active));
    k.factor().ok()?;

    let mut x = x0.to_vec();
    let mut y: Vec<f64> = (0..m).map(|i| if active[i] { y0[i] } else { 0.0 }).collect();
    let mut rhs = vec![0.0; n];
    let mut tmp = vec![0.0; m];
    let scale = 1.0 + norm_inf(&target);
    for _ in 0..POLISH_ITERS {
        for i in 0..m {
            tmp[i] = if active[i] { y[i] - POLISH_RHO * target[i] } else { 0.0 };
        }
        s.at.mul_vec(&tmp, &mut rhs);
        for i in 0..n {
            rhs[i] = POLISH_DELTA * x[i] - s.q[i] - rhs[i];
        }
        k.solve_in_place(&mut rhs);
        let step = x
            .iter()
            .zip(&rhs)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        x.copy_from_slice(&rhs);
        let ax = s.a.mul(&x);
        let mut viol = 0.0f64;
        for i in 0..m {
            if active[i] {
                let r = ax[i] - target[i];
                y[i] += POLISH_RHO * r;
                viol = viol.max(r.abs());
            }
        }
        if viol <= 1e-14 * scale && step <= 1e-14 * (1.0 + norm_inf(&x)) {
            break;
        }
    }
    Some((x, y))
}
