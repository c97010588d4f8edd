// mireg command-line front end.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mireg/io/nifti.hpp"
#include "mireg/io/text_formats.hpp"
#include "mireg/mireg.hpp"

namespace {

using namespace mireg;

void print_value(const std::string& key, double v) { std::printf("%s %.6g\n", key.c_str(), v); }

void print_ndv(double ndv) { std::printf("ndv %.6f%%\n", 100.0 * ndv); }

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string tok = text.substr(start, end - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad integer list: " + text);
    }
    start = end + 1;
  }
  return out;
}

std::vector<int> default_iters(int levels) {
  std::vector<int> out;
  const std::vector<int> base{100, 60, 20};
  for (int l = 0; l < levels; ++l) {
    const int from_finest = levels - 1 - l;
    out.push_back(from_finest < 3 ? base[static_cast<std::size_t>(2 - from_finest)] : 100);
  }
  return out;
}

// Options shared by register and register-group.
struct RegOptions {
  std::string sim = "ncc";
  int levels = 3;
  std::string iters;
  std::optional<double> l1, l2, l3, l4;
  std::string symmetric = "on";
  bool vfa_init = false;
  int exp_steps = 6;
  std::string smooth_on = "velocity";
  std::uint64_t seed = 0;
  std::string config;

  void add_to(CLI::App* app) {
    app->add_option("--sim", sim, "similarity")->check(CLI::IsMember({"ncc", "mind"}));
    app->add_option("--levels", levels, "pyramid levels");
    app->add_option("--iters", iters, "iterations per level, coarsest first (a,b,c)");
    app->add_option("--l1", l1, "similarity weight (1 for ncc, 10 for mind)");
    app->add_option("--l2", l2, "diffusion weight");
    app->add_option("--l3", l3, "group consistency weight");
    app->add_option("--l4", l4, "folding (NDV) weight");
    app->add_option("--symmetric", symmetric, "symmetric similarity")->check(CLI::IsMember({"on", "off"}));
    app->add_flag("--vfa-init", vfa_init, "initialise from the correlation-volume estimate");
    app->add_option("--exp-steps", exp_steps, "scaling and squaring steps");
    app->add_option("--smooth-on", smooth_on, "field the diffusion term acts on")
        ->check(CLI::IsMember({"velocity", "forward"}));
    app->add_option("--seed", seed, "seed (registration itself is deterministic)");
    app->add_option("--config", config, "key = value file; command-line flags win");
  }

  RegistrationConfig build() const {
    auto cfg = RegistrationConfig::defaults_for(sim == "mind" ? SimilarityKind::Mind : SimilarityKind::Lncc);
    cfg.levels = levels;
    cfg.iters_per_level = iters.empty() ? default_iters(levels) : parse_int_list(iters);
    if (l1) cfg.weights.similarity = *l1;
    if (l2) cfg.weights.smoothness = *l2;
    if (l3) cfg.weights.group = *l3;
    if (l4) cfg.weights.folding = *l4;
    cfg.symmetric = symmetric == "on";
    cfg.vfa_init = vfa_init;
    cfg.exp_steps = exp_steps;
    cfg.smooth_target = smooth_on == "forward" ? SmoothTarget::Forward : SmoothTarget::Velocity;
    cfg.seed = seed;
    return cfg;
  }
};

// Splices `--key=value` items from a --config file in right after the
// subcommand name, so later command-line flags override them.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  if (args.size() < 2 || (args[1] != "register" && args[1] != "register-group")) return args;
  std::string path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  if (!std::filesystem::exists(path)) throw Error(Errc::IoFailure, "cannot open config " + path);
  std::vector<std::string> injected;
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    if (item.name.empty() || item.name == "config" || item.inputs.empty()) continue;
    std::string value;
    for (std::size_t k = 0; k < item.inputs.size(); ++k) value += (k ? "," : "") + item.inputs[k];
    injected.push_back("--" + item.name + "=" + value);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

void write_outputs(const RegResult& r, const std::string& disp, const std::string& inv, const std::string& warped,
                   const std::string& vel) {
  if (!disp.empty()) io::write_field(disp, r.forward);
  if (!inv.empty()) io::write_field(inv, r.inverse);
  if (!warped.empty()) io::write_volume(warped, r.warped_moving);
  if (!vel.empty()) io::write_field(vel, r.velocity);
}

Histogram reference_histogram(const std::string& source) {
  if (source == "uniform") return uniform_histogram();
  return intensity_histogram(normalize_intensity(io::read_volume(source)));
}

int run(int argc, char** argv) {
  CLI::App app{"mireg: diffeomorphic multimodal registration toolkit"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  // register
  auto* reg = app.add_subcommand("register", "register a moving image to a fixed image");
  RegOptions ro;
  std::string fixed, moving, out_disp, out_inv, out_warped, out_vel;
  reg->add_option("--fixed", fixed)->required();
  reg->add_option("--moving", moving)->required();
  reg->add_option("--out-disp", out_disp, "forward displacement (mm)");
  reg->add_option("--out-inv", out_inv, "inverse displacement (mm)");
  reg->add_option("--out-warped", out_warped, "warped moving image");
  reg->add_option("--out-vel", out_vel, "stationary velocity field");
  ro.add_to(reg);

  // register-group
  auto* grp = app.add_subcommand("register-group", "jointly register a triplet A, B, C");
  RegOptions go;
  std::string ga, gb, gc, out_ab, out_bc, out_ac;
  grp->add_option("--a", ga)->required();
  grp->add_option("--b", gb)->required();
  grp->add_option("--c", gc)->required();
  grp->add_option("--out-ab", out_ab);
  grp->add_option("--out-bc", out_bc);
  grp->add_option("--out-ac", out_ac);
  go.add_to(grp);

  // warp
  auto* warp = app.add_subcommand("warp", "resample an image or label map through a displacement");
  std::string w_image, w_disp, w_out;
  bool w_labels = false;
  warp->add_option("--image", w_image)->required();
  warp->add_option("--disp", w_disp)->required();
  warp->add_option("--out", w_out)->required();
  warp->add_flag("--labels", w_labels, "nearest-neighbour label warp");

  // invert
  auto* inv = app.add_subcommand("invert", "inverse displacement from a velocity (exact) or a displacement");
  std::string i_vel, i_disp, i_out;
  int i_exp = 6, i_iters = 50;
  auto* i_vel_opt = inv->add_option("--velocity", i_vel);
  auto* i_disp_opt = inv->add_option("--disp", i_disp);
  i_vel_opt->excludes(i_disp_opt);
  inv->add_option("--exp-steps", i_exp);
  inv->add_option("--iterations", i_iters, "fixed-point iterations for --disp");
  inv->add_option("--out", i_out)->required();

  // compose
  auto* comp = app.add_subcommand("compose", "displacement of applying --first, then --second");
  std::string c_first, c_second, c_out;
  comp->add_option("--first", c_first)->required();
  comp->add_option("--second", c_second)->required();
  comp->add_option("--out", c_out)->required();

  // jacobian
  auto* jac = app.add_subcommand("jacobian", "Jacobian determinant of x + d(x)");
  std::string j_disp, j_out;
  jac->add_option("--disp", j_disp)->required();
  jac->add_option("--out", j_out);

  // metrics
  auto* met = app.add_subcommand("metrics", "evaluation metrics");
  met->require_subcommand(1);
  std::string m_a, m_b, m_fixed_lm, m_moving_lm, m_disp;
  std::int32_t m_label = 1;
  auto* dice_cmd = met->add_subcommand("dice", "per-label and mean Dice");
  dice_cmd->add_option("--a", m_a)->required();
  dice_cmd->add_option("--b", m_b)->required();
  auto* hd_cmd = met->add_subcommand("hd95", "95th percentile Hausdorff distance (mm)");
  hd_cmd->add_option("--a", m_a)->required();
  hd_cmd->add_option("--b", m_b)->required();
  hd_cmd->add_option("--label", m_label);
  auto* tre_cmd = met->add_subcommand("tre", "target registration error (mm)");
  tre_cmd->add_option("--fixed-landmarks", m_fixed_lm)->required();
  tre_cmd->add_option("--moving-landmarks", m_moving_lm)->required();
  tre_cmd->add_option("--disp", m_disp)->required();
  auto* ndv_cmd = met->add_subcommand("ndv", "non-diffeomorphic volume (percent)");
  ndv_cmd->add_option("--disp", m_disp)->required();

  // augment
  auto* aug = app.add_subcommand("augment", "random intensity remapping");
  aug->require_subcommand(1);
  std::size_t a_n = 2000;
  int a_knots = 6;
  std::uint64_t a_seed = 0;
  std::string a_ref = "uniform", a_out, a_image, a_lut;
  double a_tau = 0.25;
  auto* gen = aug->add_subcommand("gen", "generate a LUT bank");
  gen->add_option("--n", a_n);
  gen->add_option("--knots", a_knots);
  gen->add_option("--seed", a_seed);
  gen->add_option("--ref-hist", a_ref, "'uniform' or a reference volume");
  gen->add_option("--tau", a_tau, "saturation threshold");
  gen->add_option("--out", a_out)->required();
  auto* apply = aug->add_subcommand("apply", "apply a LUT to a [0, 255] image");
  apply->add_option("--image", a_image)->required();
  apply->add_option("--lut", a_lut)->required();
  apply->add_option("--out", a_out)->required();
  auto* check = aug->add_subcommand("check", "saturation check of one LUT");
  check->add_option("--lut", a_lut)->required();
  check->add_option("--ref-hist", a_ref);
  check->add_option("--tau", a_tau);

  // gradcheck
  auto* gck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradient on a random 8^3 triplet");
  std::string g_sim = "ncc", g_sym = "on";
  int g_components = 64, g_exp = 6;
  std::uint64_t g_seed = 0;
  gck->add_option("--sim", g_sim)->check(CLI::IsMember({"ncc", "mind"}));
  gck->add_option("--components", g_components);
  gck->add_option("--symmetric", g_sym)->check(CLI::IsMember({"on", "off"}));
  gck->add_option("--exp-steps", g_exp);
  gck->add_option("--seed", g_seed);

  std::vector<std::string> args(argv, argv + argc);
  args = expand_config(std::move(args));
  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (*reg) {
    const auto cfg = ro.build();
    const auto r = register_pair(io::read_volume(fixed), io::read_volume(moving), cfg);
    write_outputs(r, out_disp, out_inv, out_warped, out_vel);
    print_value("final_loss", r.final_loss);
    print_value("mean_disp_voxels", mean_voxel_norm(r.forward));
    print_value("max_disp_voxels", max_voxel_norm(r.forward));
    print_ndv(r.final_ndv);
  } else if (*grp) {
    const auto cfg = go.build();
    const auto r = register_group(io::read_volume(ga), io::read_volume(gb), io::read_volume(gc), cfg);
    if (!out_ab.empty()) io::write_field(out_ab, r.pairs[0].forward);
    if (!out_bc.empty()) io::write_field(out_bc, r.pairs[1].forward);
    if (!out_ac.empty()) io::write_field(out_ac, r.pairs[2].forward);
    const auto gl = group_consistency_loss(r.pairs[0].forward, r.pairs[1].forward, r.pairs[2].forward);
    print_value("group_consistency", gl.value);
    const char* names[3] = {"ab", "bc", "ac"};
    for (int k = 0; k < 3; ++k) print_value(std::string("final_loss_") + names[k], r.pairs[k].final_loss);
  } else if (*warp) {
    const auto d = io::read_displacement(w_disp);
    if (w_labels)
      io::write_labels(w_out, warp_labels(io::read_labels(w_image), d));
    else
      io::write_volume(w_out, warp_volume(io::read_volume(w_image), d));
  } else if (*inv) {
    if (i_vel.empty() && i_disp.empty()) throw Error(Errc::InvalidArgument, "invert needs --velocity or --disp");
    DisplacementField out;
    if (!i_vel.empty())
      out = exp_velocity(retag<VelocityTag>(io::read_displacement(i_vel)) * -1.0, i_exp);
    else
      out = invert_displacement(io::read_displacement(i_disp), i_iters);
    io::write_field(i_out, out);
  } else if (*comp) {
    io::write_field(c_out, compose(io::read_displacement(c_second), io::read_displacement(c_first)));
  } else if (*jac) {
    const auto d = io::read_displacement(j_disp);
    const Volume det = jacobian_det(d);
    if (!j_out.empty()) io::write_volume(j_out, det);
    print_value("min_det", *std::min_element(det.data.begin(), det.data.end()));
    print_ndv(ndv_metric(d));
  } else if (*dice_cmd) {
    const auto r = dice(io::read_labels(m_a), io::read_labels(m_b));
    for (const auto& [label, v] : r.per_label) print_value("dice_label_" + std::to_string(label), v);
    if (r.mean)
      print_value("dice_mean", *r.mean);
    else
      std::printf("dice_mean n/a\n");
  } else if (*hd_cmd) {
    print_value("hd95_mm", hd95(io::read_labels(m_a), io::read_labels(m_b), m_label));
  } else if (*tre_cmd) {
    const auto r = tre(io::read_landmarks(m_fixed_lm), io::read_landmarks(m_moving_lm), io::read_displacement(m_disp));
    for (std::size_t i = 0; i < r.per_landmark.size(); ++i) print_value("tre_" + std::to_string(i), r.per_landmark[i]);
    if (r.mean)
      print_value("tre_mean_mm", *r.mean);
    else
      std::printf("tre_mean_mm n/a\n");
  } else if (*ndv_cmd) {
    print_ndv(ndv_metric(io::read_displacement(m_disp)));
  } else if (*gen) {
    const auto bank = generate_bank(a_n, a_seed, a_knots, reference_histogram(a_ref), a_tau);
    std::filesystem::create_directories(a_out);
    const int width = std::max<int>(4, static_cast<int>(std::to_string(a_n - 1).size()));
    for (std::size_t i = 0; i < bank.luts.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "lut_%0*zu.txt", width, i);
      io::write_lut((std::filesystem::path(a_out) / name).string(), bank.luts[i]);
    }
    print_value("accepted", static_cast<double>(bank.luts.size()));
    print_value("rejected", static_cast<double>(bank.rejections));
  } else if (*apply) {
    io::write_volume(a_out, apply_lut(io::read_volume(a_image), io::read_lut(a_lut)));
  } else if (*check) {
    std::printf("%s\n", accept_lut(io::read_lut(a_lut), reference_histogram(a_ref), a_tau) ? "accepted" : "rejected");
  } else if (*gck) {
    auto cfg = RegistrationConfig::defaults_for(g_sim == "mind" ? SimilarityKind::Mind : SimilarityKind::Lncc);
    cfg.symmetric = g_sym == "on";
    cfg.exp_steps = g_exp;
    const auto rep = gradient_check(cfg, g_components, g_seed);
    print_value("max_rel_error", rep.max_rel_error);
    print_value("analytic_norm", rep.analytic_norm);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mireg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == mireg::Errc::InvalidArgument ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
