#include "qpr/qp_operator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace qpr {

namespace {

// Kahan-compensated accumulator; the weighted sums span many decades.
struct Kahan {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

double diff_bracket(const ModeTable& space, int a, int b) {
  auto ma = space.mode(a);
  auto mb = space.mode(b);
  double s = 1.0;
  for (int c = 0; c < space.dim(); ++c) {
    double t = double(ma[c] - mb[c]);
    s += t * t;
  }
  return std::sqrt(s);
}

double diff_norm(const ModeTable& space, int a, int b) {
  auto ma = space.mode(a);
  auto mb = space.mode(b);
  double s = 0.0;
  for (int c = 0; c < space.dim(); ++c) {
    double t = double(ma[c] - mb[c]);
    s += t * t;
  }
  return std::sqrt(s);
}

}  // namespace

QPOperator::QPOperator(const LatticeSpec& spec) : spec_(spec) {
  spec.validate();
  ns_ = int(spec.spatial_count());
  blocks_.resize(spec.angle_count());
}

Mat& QPOperator::ensure_block(int aidx) {
  Mat& b = blocks_.at(aidx);
  if (b.size() == 0) b = Mat::Zero(ns_, ns_);
  return b;
}

void QPOperator::prune() {
  for (auto& b : blocks_)
    if (b.size() != 0 && b.cwiseAbs().maxCoeff() == 0.0) b.resize(0, 0);
}

QPOperator& QPOperator::operator+=(const QPOperator& other) {
  if (!(spec_ == other.spec_)) throw std::invalid_argument("QPOperator: spec mismatch");
  for (int a = 0; a < angle_count(); ++a)
    if (other.has_block(a)) ensure_block(a) += other.block(a);
  return *this;
}

QPOperator& QPOperator::operator-=(const QPOperator& other) {
  if (!(spec_ == other.spec_)) throw std::invalid_argument("QPOperator: spec mismatch");
  for (int a = 0; a < angle_count(); ++a)
    if (other.has_block(a)) ensure_block(a) -= other.block(a);
  return *this;
}

QPOperator& QPOperator::operator*=(cplx scale) {
  for (auto& b : blocks_)
    if (b.size() != 0) b *= scale;
  return *this;
}

double QPOperator::max_abs_entry() const {
  double m = 0.0;
  for (const auto& b : blocks_)
    if (b.size() != 0) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

QPOperator qp_zero(const LatticeSpec& spec) { return QPOperator(spec); }

QPOperator qp_identity(const LatticeSpec& spec) {
  QPOperator r(spec);
  const auto& am = angle_modes(spec);
  std::vector<int> zero(spec.n, 0);
  r.ensure_block(am.index_of(zero)) = Mat::Identity(r.spatial_count(), r.spatial_count());
  return r;
}

QPOperator qp_from_diagonal(const LatticeSpec& spec, const Vec& diag) {
  QPOperator r(spec);
  if (diag.size() != r.spatial_count())
    throw std::invalid_argument("qp_from_diagonal: size mismatch");
  const auto& am = angle_modes(spec);
  std::vector<int> zero(spec.n, 0);
  r.ensure_block(am.index_of(zero)) = Mat(diag.asDiagonal());
  return r;
}

Vec qp_diagonal_of_l0(const QPOperator& R) {
  const auto& am = angle_modes(R.spec());
  std::vector<int> zero(R.spec().n, 0);
  int a0 = am.index_of(zero);
  if (!R.has_block(a0)) return Vec::Zero(R.spatial_count());
  return R.block(a0).diagonal();
}

double hs_norm(const Mat& block, const ModeTable& space, double sigma1, double sigma2) {
  if (block.size() == 0) return 0.0;
  Kahan acc;
  for (int b = 0; b < block.cols(); ++b) {
    double win = std::pow(space.bracket_of(b), -2.0 * sigma1);
    for (int a = 0; a < block.rows(); ++a) {
      double v = std::norm(block(a, b));
      if (v == 0.0) continue;
      acc.add(std::pow(space.bracket_of(a), 2.0 * sigma2) * v * win);
    }
  }
  return std::sqrt(acc.sum);
}

double m_norm(const QPOperator& R, const NormProfile& p) {
  p.validate();
  const auto& am = angle_modes(R.spec());
  const auto& sm = spatial_modes(R.spec());
  Kahan acc;
  for (int a = 0; a < R.angle_count(); ++a) {
    if (!R.has_block(a)) continue;
    double h = hs_norm(R.block(a), sm, p.sigma1, p.sigma2);
    acc.add(std::pow(am.bracket_of(a), 2.0 * p.s) * h * h);
  }
  return std::sqrt(acc.sum);
}

QPOperator grad_weight(const QPOperator& R, double beta) {
  if (beta < 0) throw std::invalid_argument("grad_weight: beta must be >= 0");
  if (beta == 0.0) return R;
  const auto& sm = spatial_modes(R.spec());
  QPOperator out(R.spec());
  for (int l = 0; l < R.angle_count(); ++l) {
    if (!R.has_block(l)) continue;
    Mat& dst = out.ensure_block(l);
    const Mat& src = R.block(l);
    for (int b = 0; b < src.cols(); ++b)
      for (int a = 0; a < src.rows(); ++a)
        dst(a, b) = src(a, b) * std::pow(diff_bracket(sm, a, b), beta);
  }
  return out;
}

double beta_norm(const QPOperator& R, const NormProfile& p) {
  NormProfile high = p;
  high.s = p.s + p.beta;
  NormProfile flat = p;
  return m_norm(R, high) + m_norm(grad_weight(R, p.beta), flat);
}

CutoffPair cutoff(const QPOperator& R, double N) {
  if (N < 1) throw std::invalid_argument("cutoff: N must be >= 1");
  const auto& am = angle_modes(R.spec());
  const auto& sm = spatial_modes(R.spec());
  CutoffPair out{QPOperator(R.spec()), QPOperator(R.spec())};
  for (int l = 0; l < R.angle_count(); ++l) {
    if (!R.has_block(l)) continue;
    const Mat& src = R.block(l);
    if (am.norm2(l) > N) {
      out.high.ensure_block(l) = src;
      continue;
    }
    Mat& lo = out.low.ensure_block(l);
    Mat& hi = out.high.ensure_block(l);
    for (int b = 0; b < src.cols(); ++b)
      for (int a = 0; a < src.rows(); ++a) {
        if (diff_norm(sm, a, b) < N)
          lo(a, b) = src(a, b);
        else
          hi(a, b) = src(a, b);
      }
  }
  out.low.prune();
  out.high.prune();
  return out;
}

QPOperator compose(const QPOperator& R, const QPOperator& P, double* dropped) {
  if (!(R.spec() == P.spec())) throw std::invalid_argument("compose: spec mismatch");
  const auto& am = angle_modes(R.spec());
  QPOperator out(R.spec());
  Kahan drop_acc;
  std::vector<int> sum(am.dim());
  for (int lr = 0; lr < R.angle_count(); ++lr) {
    if (!R.has_block(lr)) continue;
    auto mr = am.mode(lr);
    for (int lp = 0; lp < P.angle_count(); ++lp) {
      if (!P.has_block(lp)) continue;
      auto mp = am.mode(lp);
      for (int c = 0; c < am.dim(); ++c) sum[c] = mr[c] + mp[c];
      int lo = am.index_of(sum);
      if (lo < 0) {
        if (dropped) {
          Mat prod = R.block(lr) * P.block(lp);
          drop_acc.add(prod.squaredNorm());
        }
        continue;
      }
      out.ensure_block(lo).noalias() += R.block(lr) * P.block(lp);
    }
  }
  if (dropped) *dropped += std::sqrt(drop_acc.sum);
  return out;
}

Vec apply_at_angle(const QPOperator& R, std::span<const double> phi, const Vec& u) {
  const auto& am = angle_modes(R.spec());
  Vec out = Vec::Zero(u.size());
  for (int l = 0; l < R.angle_count(); ++l) {
    if (!R.has_block(l)) continue;
    auto m = am.mode(l);
    double phase = 0.0;
    for (int c = 0; c < am.dim(); ++c) phase += m[c] * phi[c];
    out.noalias() += std::polar(1.0, phase) * (R.block(l) * u);
  }
  return out;
}

Mat at_angle(const QPOperator& R, std::span<const double> phi) {
  Mat out = Mat::Zero(R.spatial_count(), R.spatial_count());
  const auto& am = angle_modes(R.spec());
  for (int l = 0; l < R.angle_count(); ++l) {
    if (!R.has_block(l)) continue;
    auto m = am.mode(l);
    double phase = 0.0;
    for (int c = 0; c < am.dim(); ++c) phase += m[c] * phi[c];
    out += std::polar(1.0, phase) * R.block(l);
  }
  return out;
}

QPOperator omega_dphi(const QPOperator& R, std::span<const double> omega) {
  const auto& am = angle_modes(R.spec());
  QPOperator out(R.spec());
  for (int l = 0; l < R.angle_count(); ++l) {
    if (!R.has_block(l)) continue;
    auto m = am.mode(l);
    double wl = 0.0;
    for (int c = 0; c < am.dim(); ++c) wl += omega[c] * m[c];
    if (wl == 0.0) continue;
    out.ensure_block(l) = cplx(0.0, wl) * R.block(l);
  }
  return out;
}

namespace {
NormProfile guard_profile(const LatticeSpec& spec) {
  // s0 = [n/2] + 1; flat spatial weights make the norm submultiplicative
  // enough to act as a convergence guard on the truncated lattice.
  NormProfile p;
  p.s = spec.n / 2 + 1;
  return p;
}
}  // namespace

QPOperator neumann_inverse_tail(const QPOperator& X, double tol, int max_terms,
                                double* dropped) {
  NormProfile gp = guard_profile(X.spec());
  double nx = m_norm(X, gp);
  if (!(nx < 1.0))
    throw std::domain_error("neumann_inverse_tail: m_norm(X) = " + std::to_string(nx) +
                            " >= 1, series refused");
  QPOperator acc(X.spec());
  QPOperator term = X;  // (-1)^k X^k, starting at k = 1
  term *= cplx(-1.0, 0.0);
  double scale = std::max(nx, 1e-300);
  for (int k = 1; k <= max_terms; ++k) {
    acc += term;
    double tn = m_norm(term, gp);
    if (tn <= tol * scale) return acc;
    term = compose(term, X, dropped);
    term *= cplx(-1.0, 0.0);
  }
  throw std::runtime_error("neumann_inverse_tail: no convergence within max terms");
}

QPOperator qp_exp(const QPOperator& X, double tol, int max_terms, double* dropped) {
  NormProfile gp = guard_profile(X.spec());
  QPOperator acc = qp_identity(X.spec());
  QPOperator term = X;
  double scale = std::max(m_norm(X, gp), 1.0);
  for (int k = 1; k <= max_terms; ++k) {
    acc += term;
    if (m_norm(term, gp) <= tol * scale) return acc;
    term = compose(term, X, dropped);
    term *= cplx(1.0 / double(k + 1), 0.0);
  }
  throw std::runtime_error("qp_exp: no convergence within max terms");
}

QPOperator adjoint(const QPOperator& R) {
  const auto& am = angle_modes(R.spec());
  QPOperator out(R.spec());
  for (int l = 0; l < R.angle_count(); ++l) {
    if (!R.has_block(l)) continue;
    out.ensure_block(am.negate(l)) = R.block(l).adjoint();
  }
  return out;
}

QPOperator commutator(const QPOperator& A, const QPOperator& B, double* dropped) {
  return compose(A, B, dropped) - compose(B, A, dropped);
}

StructureFlags check_structure(const QPOperator& R, double rel_tol) {
  const auto& am = angle_modes(R.spec());
  const auto& sm = spatial_modes(R.spec());
  const int ns = R.spatial_count();
  double scale = R.max_abs_entry();
  double tol = rel_tol * std::max(scale, 1e-300);

  StructureFlags f;
  f.real = true;
  f.reversible = true;
  f.reversibility_preserving = true;
  for (int l = 0; l < R.angle_count(); ++l) {
    int ln = am.negate(l);
    bool have = R.has_block(l), have_n = R.has_block(ln);
    if (!have && !have_n) continue;
    for (int b = 0; b < ns; ++b) {
      int bn = sm.negate(b);
      for (int a = 0; a < ns; ++a) {
        int an = sm.negate(a);
        cplx v = have ? R.block(l)(a, b) : cplx(0);
        cplx w = have_n ? R.block(ln)(an, bn) : cplx(0);
        if (std::abs(v - std::conj(w)) > tol) f.real = false;
        if (std::abs(v + w) > tol) f.reversible = false;
        if (std::abs(v - w) > tol) f.reversibility_preserving = false;
      }
      if (!f.real && !f.reversible && !f.reversibility_preserving) break;
    }
    if (!f.real && !f.reversible && !f.reversibility_preserving) break;
  }
  NormProfile flat;
  f.symmetric_hyperbolic_defect = m_norm(R + adjoint(R), flat);
  return f;
}

OrderFit estimate_order(const QPOperator& R) {
  const auto& sm = spatial_modes(R.spec());
  const int ns = R.spatial_count();
  // l-aggregated column action per input mode j'.
  std::vector<double> colsq(ns, 0.0);
  for (int l = 0; l < R.angle_count(); ++l) {
    if (!R.has_block(l)) continue;
    const Mat& blk = R.block(l);
    for (int b = 0; b < ns; ++b) colsq[b] += blk.col(b).squaredNorm();
  }
  std::vector<double> xs, ys;
  for (int b = 0; b < ns; ++b) {
    double br = sm.bracket_of(b);
    if (br < 2.0) continue;  // fit only well-separated columns
    if (colsq[b] <= 0.0) continue;
    xs.push_back(std::log(br));
    ys.push_back(0.5 * std::log(colsq[b]));
  }
  OrderFit fit;
  if (xs.size() < 3) return fit;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
  mx /= double(xs.size());
  my /= double(xs.size());
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 1e-12) return fit;
  fit.order = sxy / sxx;
  fit.ok = std::isfinite(fit.order);
  return fit;
}

namespace {
void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(reinterpret_cast<const char*>(p), n);
}
template <typename T>
T take(std::string_view& in) {
  if (in.size() < sizeof(T)) throw std::runtime_error("qp_deserialize: truncated input");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return v;
}
}  // namespace

std::string qp_serialize(const QPOperator& R) {
  std::string out;
  out.reserve(64);
  out.append("QPOP");
  std::int32_t header[5] = {1, R.spec().d, R.spec().n, R.spec().J, R.spec().L};
  put_bytes(out, header, sizeof(header));
  std::int32_t nblocks = 0;
  for (int l = 0; l < R.angle_count(); ++l)
    if (R.has_block(l)) ++nblocks;
  put_bytes(out, &nblocks, sizeof(nblocks));
  for (int l = 0; l < R.angle_count(); ++l) {
    if (!R.has_block(l)) continue;
    std::int32_t idx = l;
    put_bytes(out, &idx, sizeof(idx));
    put_bytes(out, R.block(l).data(),
              sizeof(cplx) * std::size_t(R.block(l).size()));
  }
  return out;
}

QPOperator qp_deserialize(std::string_view bytes) {
  if (bytes.substr(0, 4) != "QPOP") throw std::runtime_error("qp_deserialize: bad magic");
  bytes.remove_prefix(4);
  auto version = take<std::int32_t>(bytes);
  if (version != 1) throw std::runtime_error("qp_deserialize: unknown version");
  LatticeSpec spec;
  spec.d = take<std::int32_t>(bytes);
  spec.n = take<std::int32_t>(bytes);
  spec.J = take<std::int32_t>(bytes);
  spec.L = take<std::int32_t>(bytes);
  QPOperator R(spec);
  auto nblocks = take<std::int32_t>(bytes);
  const std::size_t msize = sizeof(cplx) * std::size_t(R.spatial_count()) *
                            std::size_t(R.spatial_count());
  for (std::int32_t i = 0; i < nblocks; ++i) {
    auto idx = take<std::int32_t>(bytes);
    if (idx < 0 || idx >= R.angle_count()) throw std::runtime_error("qp_deserialize: bad block index");
    if (bytes.size() < msize) throw std::runtime_error("qp_deserialize: truncated block");
    Mat& blk = R.ensure_block(idx);
    std::memcpy(blk.data(), bytes.data(), msize);
    bytes.remove_prefix(msize);
  }
  return R;
}

}  // namespace qpr
