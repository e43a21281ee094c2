#include "qpr/straightening.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "qpr/errors.hpp"

namespace qpr {

namespace {

double dot(std::span<const double> a, std::span<const int> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

// Spatial coefficient slice evaluated at a point; coeffs indexed by the box.
cplx eval_slice(std::span<const cplx> coeffs, const ModeTable& box,
                std::span<const double> x) {
  cplx acc(0.0);
  for (int is = 0; is < box.count(); ++is) {
    if (coeffs[is] == cplx(0.0)) continue;
    auto m = box.mode(is);
    double phase = 0.0;
    for (int c = 0; c < box.dim(); ++c) phase += m[c] * x[c];
    acc += coeffs[is] * std::polar(1.0, phase);
  }
  return acc;
}

}  // namespace

DiophantineReport diophantine_check(std::span<const double> omega,
                                    std::span<const double> nu0, double gamma,
                                    double tau, int Lmax, int Jmax) {
  const int n = int(omega.size());
  const int d = int(nu0.size());
  const ModeTable& lt = mode_table(n, Lmax);
  const ModeTable& jt = mode_table(d, Jmax);
  DiophantineReport rep;
  rep.ok = true;
  for (int il = 0; il < lt.count(); ++il) {
    auto lm = lt.mode(il);
    double wl = dot(omega, lm);
    double l2 = lt.norm2(il);
    for (int ij = 0; ij < jt.count(); ++ij) {
      auto jm = jt.mode(ij);
      if (l2 == 0.0 && jt.norm2(ij) == 0.0) continue;  // (l, j) = 0 excluded
      double div = std::abs(wl + dot(nu0, jm));
      double joint = std::sqrt(1.0 + l2 * l2 + jt.norm2(ij) * jt.norm2(ij));
      double margin = div - gamma / std::pow(joint, tau);
      if (margin < rep.worst_margin) {
        rep.worst_margin = margin;
        rep.l.assign(lm.begin(), lm.end());
        rep.j.assign(jm.begin(), jm.end());
        rep.divisor_abs = div;
      }
    }
  }
  rep.ok = rep.worst_margin > 0.0;
  return rep;
}

double Diffeomorphism::roundtrip_error() const {
  const ModeTable& sbox = spatial_modes(spec);
  const int n = spec.n, d = spec.d;
  const int Ga = 2 * spec.L + 1, Gs = 2 * spec.J + 1;
  double worst = 0.0;
  std::vector<double> phi(n), y(d), x(d);
  long atotal = 1, stotal = 1;
  for (int c = 0; c < n; ++c) atotal *= Ga;
  for (int c = 0; c < d; ++c) stotal *= Gs;
  for (long ga = 0; ga < atotal; ++ga) {
    long rem = ga;
    for (int c = n - 1; c >= 0; --c) {
      phi[c] = 2.0 * M_PI * (rem % Ga) / Ga;
      rem /= Ga;
    }
    std::vector<std::vector<cplx>> fwd(d), inv(d);
    for (int i = 0; i < d; ++i) {
      fwd[i] = alpha[i].slice_at_angle(phi);
      inv[i] = alpha_tilde[i].slice_at_angle(phi);
    }
    for (long gs = 0; gs < stotal; ++gs) {
      long srem = gs;
      for (int c = d - 1; c >= 0; --c) {
        y[c] = 2.0 * M_PI * (srem % Gs) / Gs;
        srem /= Gs;
      }
      for (int c = 0; c < d; ++c) x[c] = y[c] + eval_slice(inv[c], sbox, y).real();
      for (int c = 0; c < d; ++c) {
        double back = x[c] + eval_slice(fwd[c], sbox, x).real();
        worst = std::max(worst, std::abs(std::remainder(back - y[c], 2.0 * M_PI)));
      }
    }
  }
  return worst;
}

std::vector<PhaseFunction> invert_displacement(const std::vector<PhaseFunction>& alpha) {
  if (alpha.empty()) throw std::invalid_argument("invert_displacement: empty field");
  const LatticeSpec spec = alpha[0].spec;
  const int n = spec.n, d = spec.d;
  const ModeTable& sbox = spatial_modes(spec);
  auto dims = dealiased_dims(spec);

  // Jacobian slices d alpha_i / d x_c as coefficient functions.
  std::vector<std::vector<PhaseFunction>> dalpha(d);
  for (int i = 0; i < d; ++i)
    for (int c = 0; c < d; ++c) dalpha[i].push_back(alpha[i].dx(c));

  GridFunction tilde_vals[4];
  std::vector<int> space_dims(dims.begin() + n, dims.end());
  for (int i = 0; i < d; ++i) tilde_vals[i] = GridFunction(dims);

  std::vector<double> phi(n), y(d);
  std::vector<long> aidx(n, 0);
  long atotal = 1, stotal = 1;
  for (int c = 0; c < n; ++c) atotal *= dims[c];
  for (int c = 0; c < d; ++c) stotal *= dims[n + c];

  Eigen::MatrixXd jac(d, d);
  Eigen::VectorXd fval(d), step(d), xv(d);

  for (long ga = 0; ga < atotal; ++ga) {
    long rem = ga;
    for (int c = n - 1; c >= 0; --c) {
      aidx[c] = rem % dims[c];
      rem /= dims[c];
    }
    for (int c = 0; c < n; ++c) phi[c] = 2.0 * M_PI * aidx[c] / dims[c];
    std::vector<std::vector<cplx>> aslice(d);
    std::vector<std::vector<cplx>> dslice;
    for (int i = 0; i < d; ++i) aslice[i] = alpha[i].slice_at_angle(phi);
    for (int i = 0; i < d; ++i)
      for (int c = 0; c < d; ++c) dslice.push_back(dalpha[i][c].slice_at_angle(phi));

    for (long gs = 0; gs < stotal; ++gs) {
      long srem = gs;
      for (int c = d - 1; c >= 0; --c) {
        y[c] = 2.0 * M_PI * (srem % dims[n + c]) / dims[n + c];
        srem /= dims[n + c];
      }
      for (int c = 0; c < d; ++c) xv[c] = y[c];
      double worst = std::numeric_limits<double>::infinity();
      for (int it = 0; it < 60; ++it) {
        std::vector<double> xs(xv.data(), xv.data() + d);
        double prev = worst;
        worst = 0.0;
        for (int i = 0; i < d; ++i) {
          fval[i] = xv[i] - y[i] + eval_slice(aslice[i], sbox, xs).real();
          worst = std::max(worst, std::abs(fval[i]));
          for (int c = 0; c < d; ++c)
            jac(i, c) = (i == c ? 1.0 : 0.0) + eval_slice(dslice[i * d + c], sbox, xs).real();
        }
        // drive to rounding: stop only when the residual no longer improves
        if (worst < 1e-15 || (worst < 1e-12 && worst >= prev)) break;
        double det = jac.determinant();
        if (std::abs(det) < 1e-8)
          throw NumericalError("invert_displacement: Jacobian margin violated");
        step = jac.partialPivLu().solve(fval);
        xv -= step;
      }
      if (!(worst < 1e-12)) throw NumericalError("invert_displacement: Newton stalled");
      for (int i = 0; i < d; ++i)
        tilde_vals[i].values[ga * stotal + gs] = cplx(xv[i] - y[i], 0.0);
    }
  }

  std::vector<PhaseFunction> tilde;
  for (int i = 0; i < d; ++i) tilde.push_back(from_grid(std::move(tilde_vals[i]), spec));

  // The inverse displacement inherits the symmetry class of alpha exactly
  // (odd / real); projecting onto it strips Newton solver noise so the
  // coefficient identities survive the downstream conjugations.
  const auto& am = angle_modes(spec);
  const long ns = spec.spatial_count();
  auto mirrored = [&](const PhaseFunction& f, bool conj) {
    PhaseFunction out(spec);
    for (int ia = 0; ia < am.count(); ++ia)
      for (int is = 0; is < ns; ++is) {
        cplx v = f.at(am.negate(ia), sbox.negate(int(is)));
        out.at(ia, is) = conj ? std::conj(v) : v;
      }
    return out;
  };
  for (int i = 0; i < d; ++i) {
    if (alpha[i].has_parity(-1, 1e-10)) {
      PhaseFunction m = mirrored(tilde[i], false);
      for (std::size_t k = 0; k < tilde[i].coef.size(); ++k)
        tilde[i].coef[k] = 0.5 * (tilde[i].coef[k] - m.coef[k]);
    }
    if (alpha[i].is_real(1e-10)) {
      PhaseFunction m = mirrored(tilde[i], true);
      for (std::size_t k = 0; k < tilde[i].coef.size(); ++k)
        tilde[i].coef[k] = 0.5 * (tilde[i].coef[k] + m.coef[k]);
    }
  }
  return tilde;
}

StraighteningResult solve_straightening(const std::vector<PhaseFunction>& V,
                                        std::span<const double> omega,
                                        std::span<const double> nu, double eps,
                                        const StraighteningConfig& cfg) {
  if (V.empty()) throw std::invalid_argument("solve_straightening: empty V");
  const LatticeSpec spec = V[0].spec;
  const int n = spec.n, d = spec.d;
  if (int(omega.size()) != n || int(nu.size()) != d)
    throw std::invalid_argument("solve_straightening: parameter dimension mismatch");
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0))
    throw ConfigError("solve_straightening: gamma must lie in (0,1)");
  if (!(cfg.tau > double(n + d)))
    throw ConfigError("solve_straightening: tau must exceed n + d");
  if (eps / cfg.gamma > cfg.eps_over_gamma_cap)
    throw ConfigError("solve_straightening: eps/gamma above configured cap");

  const ModeTable& abox = angle_modes(spec);
  const ModeTable& sbox = spatial_modes(spec);
  auto dims = dealiased_dims(spec);

  StraighteningResult res;
  res.nu0.assign(nu.begin(), nu.end());
  std::vector<PhaseFunction> alpha(d, PhaseFunction(spec));

  if (eps == 0.0) {
    res.diffeo = Diffeomorphism{spec, alpha, alpha, 0.0};
    res.residual = 0.0;
    res.converged = true;
    auto rep = diophantine_check(omega, res.nu0, cfg.gamma, cfg.tau,
                                 std::max(cfg.dioph_Lmax, spec.L),
                                 std::max(cfg.dioph_Jmax, spec.J));
    res.diophantine_ok = rep.ok;
    res.dioph_worst_margin = rep.worst_margin;
    if (!rep.ok) {
      ResonantTuple t;
      t.l = rep.l;
      t.jp = rep.j;
      t.divisor_abs = rep.divisor_abs;
      throw DiophantineExit(std::move(t));
    }
    return res;
  }

  // Grids of V reused across iterations.
  std::vector<GridFunction> Vg;
  for (int c = 0; c < d; ++c) Vg.push_back(to_grid(V[c], dims));
  const long gtotal = Vg[0].total();

  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (iter = 1; iter <= cfg.max_iter; ++iter) {
    // Jacobian of the current alpha on the grid.
    std::vector<std::vector<GridFunction>> da(d);
    for (int i = 0; i < d; ++i)
      for (int c = 0; c < d; ++c) da[i].push_back(to_grid(alpha[i].dx(c), dims));

    // Solvability: nu0_i = nu_i + eps mean(V_i + sum_c V_c d_c alpha_i).
    for (int i = 0; i < d; ++i) {
      cplx m(0.0);
      for (long g = 0; g < gtotal; ++g) {
        cplx t = Vg[i].values[g];
        for (int c = 0; c < d; ++c) t += Vg[c].values[g] * da[i][c].values[g];
        m += t;
      }
      m /= double(gtotal);
      if (std::abs(m.imag()) > 1e-8)
        throw NumericalError("solve_straightening: complex mean, V must be real");
      res.nu0[i] = nu[i] + eps * m.real();
    }

    auto rep = diophantine_check(omega, res.nu0, cfg.gamma, cfg.tau,
                                 std::max(cfg.dioph_Lmax, spec.L),
                                 std::max(cfg.dioph_Jmax, spec.J));
    res.diophantine_ok = rep.ok;
    res.dioph_worst_margin = rep.worst_margin;
    if (!rep.ok) {
      ResonantTuple t;
      t.l = rep.l;
      t.jp = rep.j;
      t.divisor_abs = rep.divisor_abs;
      t.threshold = rep.divisor_abs - rep.worst_margin;
      throw DiophantineExit(std::move(t));
    }

    // RHS_i = (nu0-nu)_i - eps V_i - sum_c (eps V_c + nu_c - nu0_c) d_c alpha_i
    res.min_divisor = std::numeric_limits<double>::infinity();
    std::vector<PhaseFunction> alpha_next(d, PhaseFunction(spec));
    for (int i = 0; i < d; ++i) {
      GridFunction rhs(dims);
      for (long g = 0; g < gtotal; ++g) {
        cplx t = cplx(res.nu0[i] - nu[i], 0.0) - eps * Vg[i].values[g];
        for (int c = 0; c < d; ++c)
          t -= (eps * Vg[c].values[g] + (nu[c] - res.nu0[c])) * da[i][c].values[g];
        rhs.values[g] = t;
      }
      PhaseFunction rhat = from_grid(std::move(rhs), spec);
      for (int ia = 0; ia < abox.count(); ++ia) {
        auto lm = abox.mode(ia);
        double wl = dot(omega, lm);
        for (int is = 0; is < sbox.count(); ++is) {
          auto jm = sbox.mode(is);
          bool zero_mode = abox.norm2(ia) == 0.0 && sbox.norm2(is) == 0.0;
          if (zero_mode) {
            alpha_next[i].at(ia, is) = cplx(0.0);
            continue;
          }
          double div = wl + dot(res.nu0, jm);
          double joint =
              std::sqrt(1.0 + abox.norm2(ia) * abox.norm2(ia) + sbox.norm2(is) * sbox.norm2(is));
          double thr = cfg.gamma / std::pow(joint, cfg.tau);
          if (std::abs(div) <= thr) {
            ResonantTuple t;
            t.l.assign(lm.begin(), lm.end());
            t.jp.assign(jm.begin(), jm.end());
            t.divisor_abs = std::abs(div);
            t.threshold = thr;
            throw DiophantineExit(std::move(t));
          }
          res.min_divisor = std::min(res.min_divisor, std::abs(div));
          alpha_next[i].at(ia, is) = rhat.at(ia, is) / cplx(0.0, div);
        }
      }
    }
    alpha = std::move(alpha_next);

    // Straightening defect with the new iterate, sup over the doubled grid.
    residual = 0.0;
    for (int i = 0; i < d; ++i) {
      GridFunction e = to_grid(alpha[i].omega_dphi(omega), dims);
      std::vector<GridFunction> dai;
      for (int c = 0; c < d; ++c) dai.push_back(to_grid(alpha[i].dx(c), dims));
      for (long g = 0; g < gtotal; ++g) {
        cplx t = e.values[g] + eps * Vg[i].values[g] + cplx(nu[i] - res.nu0[i], 0.0);
        for (int c = 0; c < d; ++c)
          t += (nu[c] + eps * Vg[c].values[g]) * dai[c].values[g];
        residual = std::max(residual, std::abs(t));
      }
    }
    if (residual <= cfg.tol) break;
  }
  res.residual = residual;
  res.converged = residual <= cfg.tol;
  res.iterations = std::min(iter, cfg.max_iter);
  res.c_epsilon = 0.0;
  for (int i = 0; i < d; ++i)
    res.c_epsilon = std::max(res.c_epsilon, std::abs(res.nu0[i] - nu[i]) / eps);

  res.diffeo.spec = spec;
  res.diffeo.alpha = alpha;
  res.diffeo.alpha_tilde = invert_displacement(alpha);
  double gs = 0.0;
  for (int i = 0; i < d; ++i) {
    double row = 0.0;
    for (int c = 0; c < d; ++c) row += sup_norm_on_grid(alpha[i].dx(c));
    gs = std::max(gs, row);
  }
  res.diffeo.grad_sup = gs;

  // Push-forward field evaluated through the inverse map; must be nu0.
  {
    std::vector<PhaseFunction> g(d, PhaseFunction(spec));
    for (int i = 0; i < d; ++i) {
      PhaseFunction acc = alpha[i].omega_dphi(omega);
      for (long k = 0; k < long(acc.coef.size()); ++k)
        acc.coef[k] += eps * V[i].coef[k];
      std::vector<int> za(n, 0), zs(d, 0);
      acc.at(angle_modes(spec).index_of(za), spatial_modes(spec).index_of(zs)) +=
          cplx(nu[i], 0.0);
      for (int c = 0; c < d; ++c) {
        PhaseFunction vc = V[c];
        vc *= eps;  // see operator below
        std::vector<int> za2(n, 0), zs2(d, 0);
        vc.at(angle_modes(spec).index_of(za2), spatial_modes(spec).index_of(zs2)) +=
            cplx(nu[c], 0.0);
        PhaseFunction prod = multiply(vc, alpha[i].dx(c));
        for (long k = 0; k < long(acc.coef.size()); ++k) acc.coef[k] += prod.coef[k];
      }
      g[i] = std::move(acc);
    }
    double worst = 0.0;
    std::vector<double> phi(n), y(d), x(d);
    const int Ga = 2 * spec.L + 1, Gs = 2 * spec.J + 1;
    long atotal = 1, stotal = 1;
    for (int c = 0; c < n; ++c) atotal *= Ga;
    for (int c = 0; c < d; ++c) stotal *= Gs;
    for (long ga = 0; ga < atotal; ++ga) {
      long rem = ga;
      for (int c = n - 1; c >= 0; --c) {
        phi[c] = 2.0 * M_PI * (rem % Ga) / Ga;
        rem /= Ga;
      }
      std::vector<std::vector<cplx>> gslice(d), tslice(d);
      for (int i = 0; i < d; ++i) {
        gslice[i] = g[i].slice_at_angle(phi);
        tslice[i] = res.diffeo.alpha_tilde[i].slice_at_angle(phi);
      }
      for (long gsi = 0; gsi < stotal; ++gsi) {
        long srem = gsi;
        for (int c = d - 1; c >= 0; --c) {
          y[c] = 2.0 * M_PI * (srem % Gs) / Gs;
          srem /= Gs;
        }
        for (int c = 0; c < d; ++c) x[c] = y[c] + eval_slice(tslice[c], sbox, y).real();
        for (int i = 0; i < d; ++i)
          worst = std::max(worst,
                           std::abs(eval_slice(gslice[i], sbox, x) - cplx(res.nu0[i], 0.0)));
      }
    }
    res.pushforward_residual = worst;
  }
  return res;
}

QPOperator composition_operator(const Diffeomorphism& diffeo, bool inverse) {
  const LatticeSpec& spec = diffeo.spec;
  const int n = spec.n, d = spec.d;
  const ModeTable& abox = angle_modes(spec);
  const ModeTable& sbox = spatial_modes(spec);
  const auto& disp = inverse ? diffeo.alpha_tilde : diffeo.alpha;
  if (int(disp.size()) != d)
    throw std::invalid_argument("composition_operator: displacement missing");

  auto dims = dealiased_dims(spec);
  std::vector<int> space_dims(dims.begin() + n, dims.end());
  long stotal = 1;
  for (int c = 0; c < d; ++c) stotal *= space_dims[c];
  const int Ga = dims[0];
  long atotal = 1;
  for (int c = 0; c < n; ++c) atotal *= dims[c];

  QPOperator out(spec);
  const int ns = sbox.count();
  std::vector<double> phi(n);
  std::vector<long> aidx(n, 0);

  std::vector<GridFunction> disp_grid(d);
  GridFunction col(space_dims);
  for (long ga = 0; ga < atotal; ++ga) {
    long rem = ga;
    for (int c = n - 1; c >= 0; --c) {
      aidx[c] = rem % dims[c];
      rem /= dims[c];
    }
    for (int c = 0; c < n; ++c) phi[c] = 2.0 * M_PI * aidx[c] / dims[c];

    for (int i = 0; i < d; ++i) {
      auto slice = disp[i].slice_at_angle(phi);
      GridFunction sg = box_to_grid_coeffs(slice, sbox, space_dims);
      dft_inverse(sg);
      disp_grid[i] = std::move(sg);
    }

    Mat A(ns, ns);
    std::vector<double> x(d);
    for (int b = 0; b < ns; ++b) {
      auto jp = sbox.mode(b);
      for (long g = 0; g < stotal; ++g) {
        long srem = g;
        double phase = 0.0;
        for (int c = d - 1; c >= 0; --c) {
          double xc = 2.0 * M_PI * (srem % space_dims[c]) / space_dims[c];
          srem /= space_dims[c];
          phase += jp[c] * (xc + disp_grid[c].values[g].real());
        }
        col.values[g] = std::polar(1.0, phase);
      }
      dft_forward(col);
      auto coeffs = coeffs_to_box(col, sbox);
      for (int a = 0; a < ns; ++a) A(a, b) = coeffs[a];
    }

    // Accumulate the angle transform block by block.
    for (int l = 0; l < abox.count(); ++l) {
      auto lm = abox.mode(l);
      double lphase = 0.0;
      for (int c = 0; c < n; ++c) lphase += lm[c] * phi[c];
      out.ensure_block(l).noalias() +=
          (std::polar(1.0, -lphase) / double(atotal)) * A;
    }
  }
  (void)Ga;
  out.prune();
  return out;
}

}  // namespace qpr
