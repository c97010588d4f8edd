#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mireg/image.hpp"
#include "mireg/regularize.hpp"
#include "mireg/resample.hpp"
#include "mireg/rng.hpp"
#include "mireg/similarity.hpp"
#include "mireg/synthetic.hpp"
#include "mireg/transform.hpp"

namespace mireg {

enum class SimilarityKind { Lncc, Mind };

/// Field the diffusion regulariser acts on.
enum class SmoothTarget { Velocity, Forward };

/// Moment-based first-order update (Adam) applied in voxel units.
struct StepRule {
  double step_size = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_retries = 5;  ///< step halvings allowed per iteration
};

struct RegistrationConfig {
  int levels = 3;
  std::vector<int> iters_per_level{100, 60, 20};  ///< coarsest level first
  SimilarityKind similarity = SimilarityKind::Lncc;
  LossWeights weights = LossWeights::for_ncc();
  StepRule step;
  int exp_steps = 6;
  bool symmetric = true;
  bool vfa_init = false;
  int vfa_radius = 2;
  double vfa_temperature = 0.1;
  MindConfig mind;
  double ncc_epsilon = kDefaultNccEpsilon;
  SmoothTarget smooth_target = SmoothTarget::Velocity;
  std::uint64_t seed = 0;

  static RegistrationConfig defaults_for(SimilarityKind kind) {
    RegistrationConfig c;
    c.similarity = kind;
    c.weights = kind == SimilarityKind::Mind ? LossWeights::for_mind() : LossWeights::for_ncc();
    return c;
  }

  void validate() const {
    if (levels < 1) throw Error(Errc::InvalidArgument, "levels must be >= 1");
    if (iters_per_level.size() != static_cast<std::size_t>(levels))
      throw Error(Errc::InvalidArgument, "iters_per_level must list one count per level");
    for (int n : iters_per_level)
      if (n < 0) throw Error(Errc::InvalidArgument, "iteration counts must be >= 0");
    weights.validate();
    if (exp_steps < 0) throw Error(Errc::InvalidArgument, "exp_steps must be >= 0");
    if (symmetric && exp_steps < 1) throw Error(Errc::InvalidArgument, "symmetric mode needs exp_steps >= 1");
    if (vfa_radius < 1) throw Error(Errc::InvalidArgument, "vfa_radius must be >= 1");
    if (!(step.step_size > 0.0)) throw Error(Errc::InvalidArgument, "step size must be positive");
    if (step.max_retries < 0) throw Error(Errc::InvalidArgument, "max_retries must be >= 0");
  }
};

/// LNCC window by pyramid level: 7 at the finest level, then 5, then 3.
inline int ncc_window_for_level(int level, int levels) {
  const int from_finest = levels - 1 - level;
  return from_finest == 0 ? 7 : (from_finest == 1 ? 5 : 3);
}

struct RegResult {
  DisplacementField forward;  ///< exp(v): moving o forward ~ fixed
  DisplacementField inverse;  ///< exp(-v)
  VelocityField velocity;
  Volume warped_moving;
  std::vector<std::vector<double>> loss_trace;  ///< per level: initial value, then one per iteration
  double final_ndv = 0.0;
  double final_loss = 0.0;
};

/// Adds a term that depends on the forward displacement; returns its value
/// and accumulates its gradient (when `grad` is non-null).
using ForwardHook = std::function<double(const DisplacementField& forward, DisplacementField* grad)>;

/// One pair's objective on one pyramid level:
///   lambda1 * sim + lambda2 * diffusion(phi) + lambda4 * ndv(phi) [+ hook(phi)]
/// with phi = exp(v). In symmetric mode the similarity compares
/// fixed o exp(-v/2) against moving o exp(v/2), where each half map uses one
/// squaring fewer, so exp(v/2) o exp(v/2) is bitwise the same exp(v).
class PairObjective {
 public:
  struct Value {
    double total = 0.0;
    double pair = 0.0;  ///< total without the hook contribution
    LossTerms terms;
  };

  PairObjective(Volume fixed, Volume moving, const RegistrationConfig& cfg, int ncc_window)
      : fixed_(std::move(fixed)), moving_(std::move(moving)), cfg_(cfg), window_(ncc_window) {
    require_same_grid(fixed_.grid, moving_.grid, "PairObjective");
    if (cfg_.similarity == SimilarityKind::Mind) {
      desc_fixed_ = mind_descriptor(fixed_, cfg_.mind);
      desc_moving_ = mind_descriptor(moving_, cfg_.mind);
    }
  }

  const GridSpec& grid() const { return fixed_.grid; }

  DisplacementField forward(const VelocityField& v) const { return exp_velocity(v, cfg_.exp_steps); }
  DisplacementField inverse(const VelocityField& v) const { return exp_velocity(v * -1.0, cfg_.exp_steps); }

  Value evaluate(const VelocityField& v, VelocityField* grad, const ForwardHook& hook = {},
                 DisplacementField* forward_out = nullptr) const {
    const auto& g = grid();
    Value val;
    DisplacementField g_fwd(g);
    std::optional<FieldLoss> smooth_v;
    if (cfg_.smooth_target == SmoothTarget::Velocity) {
      smooth_v = diffusion_loss(retag<DisplacementTag>(v));
      val.terms.smoothness = smooth_v->value;
    }

    if (cfg_.symmetric) {
      const ExpTape tp = exp_velocity_taped(v * 0.5, cfg_.exp_steps - 1);
      const ExpTape tm = exp_velocity_taped(v * -0.5, cfg_.exp_steps - 1);
      const DisplacementField& hp = tp.result();
      const DisplacementField& hm = tm.result();
      DisplacementField fwd = compose(hp, hp);
      DisplacementField g_hp(g), g_hm(g);
      val.terms.similarity = similarity_symmetric(hm, hp, grad ? &g_hm : nullptr, grad ? &g_hp : nullptr);
      regularizers(fwd, val.terms, grad ? &g_fwd : nullptr);
      val.pair = weighted(val.terms);
      val.total = val.pair + (hook ? hook(fwd, grad ? &g_fwd : nullptr) : 0.0);
      if (grad) {
        compose_backward(hp, hp, g_fwd, &g_hp, &g_hp);
        VelocityField gp = exp_velocity_backward(tp, std::move(g_hp));
        VelocityField gm = exp_velocity_backward(tm, std::move(g_hm));
        gp *= 0.5;
        gm *= -0.5;
        *grad = gp + gm;
        add_velocity_smoothness(smooth_v, *grad);
      }
      if (forward_out) *forward_out = std::move(fwd);
    } else {
      const ExpTape tape = exp_velocity_taped(v, cfg_.exp_steps);
      const DisplacementField& fwd = tape.result();
      val.terms.similarity = similarity_moving_only(fwd, grad ? &g_fwd : nullptr);
      regularizers(fwd, val.terms, grad ? &g_fwd : nullptr);
      val.pair = weighted(val.terms);
      val.total = val.pair + (hook ? hook(fwd, grad ? &g_fwd : nullptr) : 0.0);
      if (grad) {
        *grad = exp_velocity_backward(tape, std::move(g_fwd));
        add_velocity_smoothness(smooth_v, *grad);
      }
      if (forward_out) *forward_out = fwd;
    }
    return val;
  }

 private:
  double weighted(const LossTerms& t) const {
    const auto& w = cfg_.weights;
    return w.similarity * t.similarity + w.smoothness * t.smoothness + w.folding * t.folding;
  }

  void regularizers(const DisplacementField& fwd, LossTerms& terms, DisplacementField* g_fwd) const {
    const auto& w = cfg_.weights;
    FieldLoss fold = ndv_loss(fwd);
    terms.folding = fold.value;
    if (g_fwd)
      for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < fwd.size(); ++i) g_fwd->comp[a][i] += w.folding * fold.grad.comp[a][i];
    if (cfg_.smooth_target != SmoothTarget::Forward) return;
    FieldLoss diff = diffusion_loss(fwd);
    terms.smoothness = diff.value;
    if (g_fwd)
      for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < fwd.size(); ++i) g_fwd->comp[a][i] += w.smoothness * diff.grad.comp[a][i];
  }

  void add_velocity_smoothness(const std::optional<FieldLoss>& sv, VelocityField& grad) const {
    if (!sv) return;
    const double l2 = cfg_.weights.smoothness;
    for (int a = 0; a < 3; ++a)
      for (std::size_t i = 0; i < grad.size(); ++i) grad.comp[a][i] += l2 * sv->grad.comp[a][i];
  }

  static std::vector<std::vector<double>> scaled(std::vector<std::vector<double>> x, double s) {
    for (auto& c : x)
      for (auto& e : c) e *= s;
    return x;
  }

  /// Similarity of fixed vs moving o fwd; gradient w.r.t. fwd.
  double similarity_moving_only(const DisplacementField& fwd, DisplacementField* g_fwd) const {
    const double l1 = cfg_.weights.similarity;
    if (cfg_.similarity == SimilarityKind::Lncc) {
      const std::array<std::vector<double>, 1> ch{moving_.data};
      Volume mw(grid(), std::move(warp_channels(ch, fwd)[0]));
      auto r = lncc(fixed_, mw, window_, cfg_.ncc_epsilon, g_fwd != nullptr);
      if (g_fwd) {
        for (auto& x : r.grad_m) x *= l1;
        const std::array<std::vector<double>, 1> go{std::move(r.grad_m)};
        warp_channels_backward(ch, fwd, go, *g_fwd);
      }
      return r.loss;
    }
    const auto warped = warp_channels(desc_moving_.channels, fwd);
    std::vector<std::vector<double>> g_w;
    const double loss = detail::descriptor_sse(desc_fixed_.channels, warped, nullptr, g_fwd ? &g_w : nullptr);
    if (g_fwd) warp_channels_backward(desc_moving_.channels, fwd, scaled(std::move(g_w), l1), *g_fwd);
    return loss;
  }

  /// Similarity of fixed o hm vs moving o hp; gradients w.r.t. both half maps.
  double similarity_symmetric(const DisplacementField& hm, const DisplacementField& hp, DisplacementField* g_hm,
                              DisplacementField* g_hp) const {
    const double l1 = cfg_.weights.similarity;
    const bool want = g_hm != nullptr;
    if (cfg_.similarity == SimilarityKind::Lncc) {
      const std::array<std::vector<double>, 1> cf{fixed_.data}, cm{moving_.data};
      Volume fw(grid(), std::move(warp_channels(cf, hm)[0]));
      Volume mw(grid(), std::move(warp_channels(cm, hp)[0]));
      auto r = lncc(fw, mw, window_, cfg_.ncc_epsilon, want);
      if (want) {
        for (auto& x : r.grad_f) x *= l1;
        for (auto& x : r.grad_m) x *= l1;
        const std::array<std::vector<double>, 1> gf{std::move(r.grad_f)}, gm{std::move(r.grad_m)};
        warp_channels_backward(cf, hm, gf, *g_hm);
        warp_channels_backward(cm, hp, gm, *g_hp);
      }
      return r.loss;
    }
    const auto wf = warp_channels(desc_fixed_.channels, hm);
    const auto wm = warp_channels(desc_moving_.channels, hp);
    std::array<std::vector<double>, kMindChannels> wf_arr;
    for (int c = 0; c < kMindChannels; ++c) wf_arr[c] = wf[c];
    std::vector<std::vector<double>> g_f, g_m;
    const double loss = detail::descriptor_sse(wf_arr, wm, want ? &g_f : nullptr, want ? &g_m : nullptr);
    if (want) {
      warp_channels_backward(desc_fixed_.channels, hm, scaled(std::move(g_f), l1), *g_hm);
      warp_channels_backward(desc_moving_.channels, hp, scaled(std::move(g_m), l1), *g_hp);
    }
    return loss;
  }

  Volume fixed_, moving_;
  RegistrationConfig cfg_;
  int window_;
  DescriptorField desc_fixed_, desc_moving_;
};

/// Adam in voxel units with backtracking: a trial whose objective is
/// non-finite or larger than the current value halves the step size and is
/// retried; after `max_retries` halvings the iterate is left unchanged. Each
/// accepted step doubles the step size again, up to its initial value.
class AdamStepper {
 public:
  AdamStepper(const GridSpec& g, const StepRule& rule) : grid_(g), rule_(rule), lr_(rule.step_size), m_(g), s_(g) {}

  double step_size() const { return lr_; }

  /// `eval(v_try, grad_out)` returns the objective at v_try and fills its
  /// gradient. On acceptance v, loss and grad are replaced by the trial's.
  template <class Eval>
  bool step(VelocityField& v, double& loss, VelocityField& grad, Eval&& eval) {
    ++t_;
    const double bc1 = 1.0 - std::pow(rule_.beta1, t_), bc2 = 1.0 - std::pow(rule_.beta2, t_);
    VelocityField dir(grid_);
    for (int a = 0; a < 3; ++a) {
      const double sp = grid_.spacing[a];
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double gu = grad.comp[a][i] * sp;
        double& m = m_.comp[a][i];
        double& s = s_.comp[a][i];
        m = rule_.beta1 * m + (1.0 - rule_.beta1) * gu;
        s = rule_.beta2 * s + (1.0 - rule_.beta2) * gu * gu;
        dir.comp[a][i] = (m / bc1) / (std::sqrt(s / bc2) + rule_.epsilon) * sp;
      }
    }
    bool any_finite = false;
    for (int attempt = 0; attempt <= rule_.max_retries; ++attempt) {
      VelocityField trial = v;
      for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < v.size(); ++i) trial.comp[a][i] -= lr_ * dir.comp[a][i];
      VelocityField g_trial(grid_);
      const double l_trial = eval(trial, g_trial);
      if (std::isfinite(l_trial)) {
        any_finite = true;
        if (l_trial <= loss) {
          v = std::move(trial);
          loss = l_trial;
          grad = std::move(g_trial);
          lr_ = std::min(2.0 * lr_, rule_.step_size);
          return true;
        }
      }
      lr_ *= 0.5;
    }
    if (!any_finite) throw Error(Errc::NonFiniteLoss, "every trial step produced a non-finite objective");
    return false;
  }

 private:
  GridSpec grid_;
  StepRule rule_;
  double lr_;
  VelocityField m_, s_;
  int t_ = 0;
};

namespace detail {

inline void require_finite_loss(double loss) {
  if (!std::isfinite(loss)) throw Error(Errc::NonFiniteLoss, "objective is not finite");
}

/// Velocity from vector-field attention over MIND-feature correlation.
inline VelocityField vfa_velocity(const Volume& fixed, const Volume& moving, const RegistrationConfig& cfg) {
  const auto df = mind_descriptor(fixed, cfg.mind);
  const auto dm = mind_descriptor(moving, cfg.mind);
  return retag<VelocityTag>(vfa_displacement(correlation_volume(df, dm, cfg.vfa_radius), cfg.vfa_temperature));
}

struct PreparedPair {
  std::vector<Volume> fixed, moving;  ///< pyramids, coarsest first
};

inline PreparedPair prepare_pair(const Volume& fixed, const Volume& moving, const RegistrationConfig& cfg) {
  require_same_grid(fixed.grid, moving.grid, "register");
  return {build_pyramid(normalize_intensity(fixed), cfg.levels),
          build_pyramid(normalize_intensity(moving), cfg.levels)};
}

inline RegResult finish_pair(const PairObjective& obj, VelocityField v, const Volume& moving,
                             std::vector<std::vector<double>> trace, double final_loss) {
  RegResult r;
  r.forward = obj.forward(v);
  r.inverse = obj.inverse(v);
  r.warped_moving = warp_volume(moving, r.forward);
  r.final_ndv = ndv_metric(r.forward);
  r.velocity = std::move(v);
  r.loss_trace = std::move(trace);
  r.final_loss = final_loss;
  return r;
}

}  // namespace detail

/// Coarse-to-fine instance optimisation of one stationary velocity field.
/// Group consistency is not part of the pairwise objective.
inline RegResult register_pair(const Volume& fixed, const Volume& moving, const RegistrationConfig& cfg) {
  cfg.validate();
  const auto prep = detail::prepare_pair(fixed, moving, cfg);
  VelocityField v(prep.fixed[0].grid);
  if (cfg.vfa_init) v = detail::vfa_velocity(prep.fixed[0], prep.moving[0], cfg);

  std::vector<std::vector<double>> trace(static_cast<std::size_t>(cfg.levels));
  std::optional<PairObjective> obj;
  double loss = 0.0;
  for (int l = 0; l < cfg.levels; ++l) {
    if (l > 0) v = upsample_field(v, prep.fixed[l].grid);
    obj.emplace(prep.fixed[l], prep.moving[l], cfg, ncc_window_for_level(l, cfg.levels));
    AdamStepper stepper(obj->grid(), cfg.step);
    VelocityField grad(obj->grid());
    loss = obj->evaluate(v, &grad).total;
    detail::require_finite_loss(loss);
    trace[l].push_back(loss);
    for (int it = 0; it < cfg.iters_per_level[l]; ++it) {
      stepper.step(v, loss, grad, [&](const VelocityField& vt, VelocityField& gt) {
        return obj->evaluate(vt, &gt).total;
      });
      trace[l].push_back(loss);
    }
  }
  return detail::finish_pair(*obj, std::move(v), moving, std::move(trace), loss);
}

struct GroupResult {
  std::array<RegResult, 3> pairs;  ///< A->B, B->C, A->C
  std::vector<std::vector<double>> gc_trace;  ///< per level: unweighted GC at the start, then after each iteration
};

/// Joint optimisation of the A->B, B->C and A->C velocity fields. Each
/// iteration updates the three fields in turn (Gauss-Seidel); field k
/// minimises its pair objective plus lambda3 * GC with the other two fields at
/// their current values. With lambda3 = 0 every field follows exactly the
/// iterates register_pair would produce.
inline GroupResult register_group(const Volume& a, const Volume& b, const Volume& c, const RegistrationConfig& cfg) {
  cfg.validate();
  require_same_grid(a.grid, b.grid, "register_group");
  require_same_grid(a.grid, c.grid, "register_group");
  const std::array<const Volume*, 3> fixed{&a, &b, &a}, moving{&b, &c, &c};
  std::array<detail::PreparedPair, 3> prep;
  for (int k = 0; k < 3; ++k) prep[k] = detail::prepare_pair(*fixed[k], *moving[k], cfg);

  std::array<VelocityField, 3> v;
  for (int k = 0; k < 3; ++k) {
    v[k] = VelocityField(prep[k].fixed[0].grid);
    if (cfg.vfa_init) v[k] = detail::vfa_velocity(prep[k].fixed[0], prep[k].moving[0], cfg);
  }
  const double lambda3 = cfg.weights.group;
  std::array<std::vector<std::vector<double>>, 3> trace;
  for (auto& t : trace) t.resize(static_cast<std::size_t>(cfg.levels));
  GroupResult out;
  out.gc_trace.resize(static_cast<std::size_t>(cfg.levels));
  std::vector<PairObjective> objs;
  std::array<double, 3> pair_loss{};

  for (int l = 0; l < cfg.levels; ++l) {
    objs.clear();
    for (int k = 0; k < 3; ++k) {
      if (l > 0) v[k] = upsample_field(v[k], prep[k].fixed[l].grid);
      objs.emplace_back(prep[k].fixed[l], prep[k].moving[l], cfg, ncc_window_for_level(l, cfg.levels));
    }
    const GridSpec& g = objs[0].grid();
    std::array<DisplacementField, 3> fwd;
    std::vector<AdamStepper> steppers;
    for (int k = 0; k < 3; ++k) {
      steppers.emplace_back(g, cfg.step);
      // The pair-only evaluation matches register_pair's initial value exactly.
      pair_loss[k] = objs[k].evaluate(v[k], nullptr, {}, &fwd[k]).pair;
      detail::require_finite_loss(pair_loss[k]);
      trace[k][l].push_back(pair_loss[k]);
    }
    out.gc_trace[l].push_back(group_consistency_loss(fwd[0], fwd[1], fwd[2]).value);

    for (int it = 0; it < cfg.iters_per_level[l]; ++it) {
      for (int k = 0; k < 3; ++k) {
        ForwardHook hook;
        if (lambda3 > 0.0) {
          hook = [&, k](const DisplacementField& f, DisplacementField* gr) {
            std::array<const DisplacementField*, 3> slot{&fwd[0], &fwd[1], &fwd[2]};
            slot[k] = &f;
            GroupLoss gc = group_consistency_loss(*slot[0], *slot[1], *slot[2]);
            if (gr) {
              const DisplacementField& gk = k == 0 ? gc.grad_ab : (k == 1 ? gc.grad_bc : gc.grad_ac);
              for (int ax = 0; ax < 3; ++ax)
                for (std::size_t i = 0; i < gk.size(); ++i) gr->comp[ax][i] += lambda3 * gk.comp[ax][i];
            }
            return lambda3 * gc.value;
          };
        }
        VelocityField grad(g);
        DisplacementField f_cur;
        auto cur = objs[k].evaluate(v[k], &grad, hook, &f_cur);
        double loss = cur.total;
        PairObjective::Value last;
        DisplacementField f_last;
        const bool accepted = steppers[k].step(v[k], loss, grad, [&](const VelocityField& vt, VelocityField& gt) {
          last = objs[k].evaluate(vt, &gt, hook, &f_last);
          return last.total;
        });
        if (accepted) {
          pair_loss[k] = last.pair;
          fwd[k] = std::move(f_last);
        }
        trace[k][l].push_back(pair_loss[k]);
      }
      out.gc_trace[l].push_back(group_consistency_loss(fwd[0], fwd[1], fwd[2]).value);
    }
  }
  for (int k = 0; k < 3; ++k)
    out.pairs[k] = detail::finish_pair(objs[k], std::move(v[k]), *moving[k], std::move(trace[k]), pair_loss[k]);
  return out;
}

struct GradientCheckOptions {
  bool identical_images = false;  ///< use one image for A, B and C
  bool zero_velocity = false;     ///< evaluate at v = 0
  double h_voxels = 1e-3;
};

struct GradientCheckReport {
  double max_rel_error = 0.0;
  double analytic_norm = 0.0;  ///< L2 norm of the full analytic gradient
  LossTerms terms;             ///< summed over the three pairs; group is unweighted GC
  int components = 0;
};

/// Builds a random 8^3 triplet problem with anisotropic spacing and compares
/// the analytic gradient of
///   sum_k pair_k(v_k) + lambda3 * GC(exp v_AB, exp v_BC, exp v_AC)
/// against central differences on `n_components` random velocity entries.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6 * max|analytic|).
inline GradientCheckReport gradient_check(const RegistrationConfig& cfg, int n_components, std::uint64_t seed,
                                          const GradientCheckOptions& opt = {}) {
  if (n_components < 1) throw Error(Errc::InvalidArgument, "gradient_check needs n_components >= 1");
  cfg.validate();
  Rng rng(seed);
  const GridSpec g = make_grid(8, 8, 8, {1.0, 1.25, 0.8}, {-3.0, 2.0, 0.5});
  std::array<Volume, 3> img;
  img[0] = synthetic::blob_image(g, rng, 12, 8.0, 12.0);
  for (int k = 1; k < 3; ++k) img[k] = opt.identical_images ? img[0] : synthetic::blob_image(g, rng, 12, 8.0, 12.0);
  const std::array<int, 3> fi{0, 1, 0}, mi{1, 2, 2};
  std::vector<PairObjective> objs;
  for (int k = 0; k < 3; ++k) objs.emplace_back(img[fi[k]], img[mi[k]], cfg, 5);
  std::array<VelocityField, 3> v;
  // Each component is a fractional offset of 0.25..0.75 voxel in magnitude, so
  // every sample position keeps a margin from the trilinear cell faces and the
  // grid border, where the objective has kinks.
  for (int k = 0; k < 3; ++k) {
    if (opt.zero_velocity) {
      v[k] = VelocityField(g);
      continue;
    }
    v[k] = synthetic::smooth_velocity(g, rng, 0.2, 4, false);
    for (int a = 0; a < 3; ++a) {
      const double base = rng.uniform(0.45, 0.55) * (rng.uniform() < 0.5 ? -1.0 : 1.0) * g.spacing[a];
      for (double& x : v[k].comp[a]) x += base;
    }
  }

  const double lambda3 = cfg.weights.group;
  auto objective = [&](const std::array<VelocityField, 3>& vs, std::array<VelocityField, 3>* grads,
                       LossTerms* terms) {
    std::array<DisplacementField, 3> f;
    for (int k = 0; k < 3; ++k) f[k] = objs[k].forward(vs[k]);
    GroupLoss gc = group_consistency_loss(f[0], f[1], f[2]);
    const std::array<const DisplacementField*, 3> gk{&gc.grad_ab, &gc.grad_bc, &gc.grad_ac};
    double total = lambda3 * gc.value;
    if (terms) terms->group = gc.value;
    for (int k = 0; k < 3; ++k) {
      ForwardHook hook = [&, k](const DisplacementField&, DisplacementField* gr) {
        if (gr)
          for (int a = 0; a < 3; ++a)
            for (std::size_t i = 0; i < gr->size(); ++i) gr->comp[a][i] += lambda3 * gk[k]->comp[a][i];
        return 0.0;
      };
      auto val = objs[k].evaluate(vs[k], grads ? &(*grads)[k] : nullptr, hook);
      total += val.total;
      if (terms) {
        terms->similarity += val.terms.similarity;
        terms->smoothness += val.terms.smoothness;
        terms->folding += val.terms.folding;
      }
    }
    return total;
  };

  GradientCheckReport rep;
  std::array<VelocityField, 3> grads;
  objective(v, &grads, &rep.terms);
  double gmax = 0.0, norm2 = 0.0;
  for (const auto& gr : grads)
    for (const auto& c : gr.comp)
      for (double x : c) {
        gmax = std::max(gmax, std::abs(x));
        norm2 += x * x;
      }
  rep.analytic_norm = std::sqrt(norm2);
  const double floor = std::max(1e-6 * gmax, 1e-300);
  rep.components = n_components;
  for (int n = 0; n < n_components; ++n) {
    const auto k = static_cast<std::size_t>(rng.below(3));
    const auto a = static_cast<int>(rng.below(3));
    const auto i = static_cast<std::size_t>(rng.below(g.size()));
    const double h = opt.h_voxels * g.spacing[a];
    auto vp = v, vm = v;
    vp[k].comp[a][i] += h;
    vm[k].comp[a][i] -= h;
    const double numeric = (objective(vp, nullptr, nullptr) - objective(vm, nullptr, nullptr)) / (2.0 * h);
    const double analytic = grads[k].comp[a][i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
  }
  return rep;
}

}  // namespace mireg
