// gst: group sequential trial designs with covariate-adjusted estimators.
//
// Subcommands: are, gen, estimate, design, simulate, power. JSON goes to
// stdout, bulk data to files. Exit codes: 0 success, 1 runtime failure,
// 2 usage error. GST_SEED serves as the seed fallback.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gst/dgm.hpp"
#include "gst/estimators.hpp"
#include "gst/gsd.hpp"
#include "gst/precision.hpp"
#include "gst/trial.hpp"

using nlohmann::json;

namespace {

std::uint64_t resolve_seed(const CLI::App* cmd, std::optional<std::uint64_t> seed_flag) {
  if (seed_flag) return *seed_flag;
  if (const char* env = std::getenv("GST_SEED")) return std::strtoull(env, nullptr, 10);
  throw CLI::ValidationError(cmd->get_name(), "a seed is required (--seed or GST_SEED)");
}

json summary_to_json(const gst::PrecisionSummary& p) {
  json per_arm;
  for (int arm = 0; arm < 2; ++arm) {
    per_arm[std::to_string(arm)] = {{"r2_w", p.r2_w_a[arm]},
                                    {"r2_l_given_w", p.r2_l_given_w_a[arm]},
                                    {"r2_resid", p.r2_resid_a[arm]}};
  }
  return {{"r2_w", p.r2_w},
          {"r2_l_given_w", p.r2_l_given_w},
          {"gamma", p.gamma},
          {"per_arm", per_arm}};
}

json estimate_to_json(const gst::EstimateResult& e) {
  return {{"delta_hat", e.delta_hat},
          {"variance_hat", e.variance_hat},
          {"information", e.information},
          {"n_enrolled", e.n_enrolled},
          {"estimator", e.kind == gst::EstimatorKind::tmle ? "tmle" : "unadjusted"},
          {"degenerate", e.degenerate},
          {"targeting_fallback", e.targeting_fallback}};
}

gst::DgmConfig make_dgm_config(const std::string& setting, double delta, double reset_effect,
                               double reset_noise) {
  gst::DgmConfig cfg = gst::canonical_config();
  cfg.setting = gst::setting_from_string(setting);
  cfg.delta = delta;
  if (reset_effect >= 0.0) cfg.reset_effect_prob = reset_effect;
  if (reset_noise >= 0.0) cfg.reset_noise_prob = reset_noise;
  cfg.validate();
  return cfg;
}

void write_figure_data(const std::string& dir) {
  // ARE against p_y for combinations of R^2_W and gamma (no short-term
  // outcome contribution).
  {
    std::ofstream os(dir + "/are_vs_py.csv");
    if (!os) throw std::runtime_error("cannot write " + dir + "/are_vs_py.csv");
    os << "r2_w,gamma,p_y,are\n";
    for (double r2w : {0.1, 0.25}) {
      for (double frac : {0.0, 0.5, 1.0}) {
        gst::PrecisionSummary p;
        p.r2_w = r2w;
        p.gamma = 2.0 * r2w * frac;
        for (int i = 1; i <= 20; ++i) {
          const double py = 0.05 * i;
          os << r2w << ',' << p.gamma << ',' << py << ',' << gst::are_ate(p, py, 1.0) << '\n';
        }
      }
    }
  }
  // ARE against p_y / p_l when only the short-term outcome is prognostic.
  {
    std::ofstream os(dir + "/are_vs_pypl.csv");
    if (!os) throw std::runtime_error("cannot write " + dir + "/are_vs_pypl.csv");
    os << "r2_l_given_w,py_over_pl,are\n";
    for (double r2lw : {0.1, 0.25}) {
      gst::PrecisionSummary p;
      p.r2_l_given_w = r2lw;
      for (int i = 1; i <= 20; ++i) {
        const double ratio = 0.05 * i;
        os << r2lw << ',' << ratio << ',' << gst::are_ate(p, ratio, 1.0) << '\n';
      }
    }
  }
  // Contour grid of the sample-size-reduction ratio r over (p_l, p_y).
  {
    std::ofstream os(dir + "/ratio_r_contour.csv");
    if (!os) throw std::runtime_error("cannot write " + dir + "/ratio_r_contour.csv");
    os << "p_l,p_y,r\n";
    for (int i = 1; i <= 20; ++i)
      for (int j = 1; j < i; ++j) {
        const double pl = 0.05 * i, py = 0.05 * j;
        os << pl << ',' << py << ',' << gst::ratio_r(py, pl) << '\n';
      }
  }
}

int cmd_are(double r2w, double r2lw, double gamma, double py, double pl, int arm, double pa,
            bool want_ratio_r) {
  gst::PrecisionSummary p;
  p.r2_w = r2w;
  p.r2_l_given_w = r2lw;
  p.gamma = gamma;
  json out;
  if (arm >= 0) {
    p.r2_w_a[arm] = r2w;
    p.r2_l_given_w_a[arm] = r2lw;
    const double are = gst::are_arm(p, arm, pa, py, pl);
    out["are"] = are;
    out["aerss"] = gst::aerss(std::max(are, 1.0));
    out["arm"] = arm;
    if (py < pl) out["ratio_r"] = gst::ratio_r(py, pl);
  } else {
    const double are = gst::are_ate(p, py, pl);
    out["are"] = are;
    out["aerss"] = gst::aerss(std::max(are, 1.0));
    if (want_ratio_r) out["ratio_r"] = gst::ratio_r(py, pl);
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"group sequential trial designs with covariate-adjusted estimators"};
  app.require_subcommand(1);

  // ---- are ------------------------------------------------------------
  auto* are = app.add_subcommand("are", "closed-form relative efficiency and sample-size reduction");
  double r2w = 0.0, r2lw = 0.0, gamma = 0.0, py = 1.0, pl = 1.0, pa = 0.5;
  int arm = -1;
  bool want_ratio_r = false;
  are->add_option("--r2w", r2w, "proportion of outcome variance explained by W");
  are->add_option("--r2lw", r2lw, "additional proportion explained by L after W");
  are->add_option("--gamma", gamma, "treatment effect heterogeneity");
  are->add_option("--py", py, "fraction with the primary outcome observed")->required();
  are->add_option("--pl", pl, "fraction with the short-term outcome observed")->required();
  are->add_option("--arm", arm, "treatment-specific mean for this arm (0 or 1)");
  are->add_option("--pa", pa, "randomization probability for --arm");
  are->add_flag("--ratio-r", want_ratio_r, "also report the W-versus-L sample-size ratio");

  // ---- gen ------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a simulated trial dataset (CSV)");
  std::string gen_setting = "progn_WL", gen_out;
  double gen_delta = 0.122, gen_rate = 140.0;
  double gen_reset_effect = -1.0, gen_reset_noise = -1.0;
  std::size_t gen_n = 0;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--setting", gen_setting, "progn_WL|progn_W|progn_L|progn_none");
  gen->add_option("--delta", gen_delta, "average treatment effect (0 or 0.122)");
  gen->add_option("--n", gen_n, "number of participants")->required();
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--rate", gen_rate, "enrollment rate per year");
  gen->add_option("--reset-effect", gen_reset_effect, "twin effect-reset probability");
  gen->add_option("--reset-noise", gen_reset_noise, "twin noise-reset probability");

  // ---- estimate --------------------------------------------------------
  auto* est = app.add_subcommand("estimate", "estimate the treatment effect from a CSV dataset");
  std::string est_data, est_kind = "tmle";
  double est_time = 0.0;
  bool est_bootstrap = false;
  std::optional<std::uint64_t> est_seed;
  est->add_option("--data", est_data, "input CSV")->required();
  est->add_option("--time", est_time, "analysis time in years")->required();
  est->add_option("--estimator", est_kind, "unadjusted|tmle");
  est->add_flag("--bootstrap", est_bootstrap, "bootstrap variance instead of the EIF variance");
  est->add_option("--seed", est_seed, "bootstrap seed");

  // ---- design ----------------------------------------------------------
  auto* design = app.add_subcommand("design", "solve error-spending boundaries");
  int d_stages = 5;
  double d_alpha = 0.025, d_beta = 0.2, d_delta = 0.122, d_imax = 0.0;
  std::vector<double> d_fractions;
  std::string d_setting, d_estimator = "tmle", d_figures;
  int d_nmax = 480, d_mtrials = 2000, d_workers = 1;
  std::optional<std::uint64_t> d_seed;
  design->add_option("--k", d_stages, "number of stages");
  design->add_option("--alpha", d_alpha, "one-sided type I error");
  design->add_option("--beta", d_beta, "type II error");
  design->add_option("--delta", d_delta, "design alternative");
  design->add_option("--i-max", d_imax, "maximum information (canonical mode)");
  design->add_option("--info-fractions", d_fractions,
                     "canonical interim information fractions (K-1 values)");
  design->add_option("--setting", d_setting, "estimate the covariance under this setting");
  design->add_option("--estimator", d_estimator, "unadjusted|tmle (covariance mode)");
  design->add_option("--n-max", d_nmax, "maximum sample size (covariance mode)");
  design->add_option("--m-trials", d_mtrials, "trials for the covariance estimate");
  design->add_option("--workers", d_workers, "worker threads");
  design->add_option("--seed", d_seed, "RNG seed");
  design->add_option("--emit-figure-data", d_figures, "write plot-ready CSV grids to this directory");

  // ---- simulate ----------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "simulate operating characteristics");
  std::string s_setting = "progn_W", s_estimator = "unadjusted", s_out;
  int s_nmax = 480, s_trials = 5000, s_workers = 1;
  double s_reset_effect = -1.0, s_reset_noise = -1.0;
  std::optional<std::uint64_t> s_seed;
  sim->add_option("--setting", s_setting, "prognostic setting");
  sim->add_option("--estimator", s_estimator, "unadjusted|tmle");
  sim->add_option("--n-max", s_nmax, "maximum sample size");
  sim->add_option("--trials", s_trials, "number of simulated trials per hypothesis");
  sim->add_option("--workers", s_workers, "worker threads");
  sim->add_option("--seed", s_seed, "RNG seed");
  sim->add_option("--out", s_out, "per-trial results CSV (optional)");
  sim->add_option("--reset-effect", s_reset_effect, "twin effect-reset probability");
  sim->add_option("--reset-noise", s_reset_noise, "twin noise-reset probability");

  // ---- power -------------------------------------------------------------
  auto* pw = app.add_subcommand("power", "binary-search the smallest adequate n_max");
  std::string p_setting = "progn_W", p_estimator = "tmle";
  double p_target = 0.80;
  int p_trials = 2000, p_workers = 1;
  std::optional<std::uint64_t> p_seed;
  pw->add_option("--setting", p_setting, "prognostic setting");
  pw->add_option("--estimator", p_estimator, "unadjusted|tmle");
  pw->add_option("--target", p_target, "power target");
  pw->add_option("--trials-per-probe", p_trials, "trials per probe");
  pw->add_option("--workers", p_workers, "worker threads");
  pw->add_option("--seed", p_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (are->parsed()) {
      if (!(py > 0.0 && py <= pl && pl <= 1.0)) {
        std::cerr << "are: need 0 < py <= pl <= 1\n";
        return 2;
      }
      if (arm > 1 || arm < -1) {
        std::cerr << "are: --arm must be 0 or 1\n";
        return 2;
      }
      return cmd_are(r2w, r2lw, gamma, py, pl, arm, pa, want_ratio_r);
    }

    if (gen->parsed()) {
      const auto seed = resolve_seed(gen, gen_seed);
      const auto cfg = make_dgm_config(gen_setting, gen_delta, gen_reset_effect, gen_reset_noise);
      auto records = gst::sample_trial(gst::default_population(), gen_n, cfg, seed);
      gst::assign_enrollment_times(records, gen_rate);
      gst::write_csv_file(gen_out, records);
      return 0;
    }

    if (est->parsed()) {
      if (est_kind != "tmle" && est_kind != "unadjusted") {
        std::cerr << "estimate: unknown estimator '" << est_kind << "'\n";
        return 2;
      }
      auto records = gst::read_csv_file(est_data);
      std::erase_if(records, [&](const auto& r) { return r.enroll_time > est_time; });
      if (records.empty()) throw std::runtime_error("estimate: no participants enrolled by --time");
      gst::DelayConfig delays;
      auto snap = gst::snapshot_at(std::move(records), est_time, delays);
      const auto wm = gst::WorkingModelSpec::all_main_terms(static_cast<int>(snap.records[0].w.size()));
      gst::EstimateResult res;
      if (est_kind == "unadjusted") {
        res = gst::unadjusted_ate(snap);
      } else {
        gst::TmleOptions opts;
        if (est_bootstrap) {
          opts.bootstrap_variance = true;
          opts.seed = resolve_seed(est, est_seed);
        }
        res = gst::tmle_ate(snap, wm, opts);
      }
      json out = estimate_to_json(res);
      out["wald"] = gst::wald_statistic(res);
      out["p_y"] = snap.p_y;
      out["p_l"] = snap.p_l;
      out["precision"] = summary_to_json(gst::plug_in_summary(snap, wm));
      std::cout << out.dump(2) << '\n';
      return 0;
    }

    if (design->parsed()) {
      if (!d_figures.empty()) write_figure_data(d_figures);
      gst::ErrorSpendingSpec spec;
      spec.k_stages = d_stages;
      spec.alpha = d_alpha;
      spec.beta = d_beta;
      spec.delta_alt = d_delta;
      spec.i_max = d_imax;
      gst::JointStatisticModel model;
      if (!d_setting.empty()) {
        const auto seed = resolve_seed(design, d_seed);
        gst::DesignSkeleton skeleton;
        skeleton.k_stages = d_stages;
        skeleton.n_max = d_nmax;
        auto cfg = make_dgm_config(d_setting, 0.0, -1.0, -1.0);
        const auto kind =
            d_estimator == "unadjusted" ? gst::EstimatorKind::unadjusted : gst::EstimatorKind::tmle;
        model = gst::estimate_joint_covariance(cfg, skeleton, kind, d_mtrials, seed, d_workers);
      } else if (!d_fractions.empty()) {
        if (static_cast<int>(d_fractions.size()) != d_stages - 1) {
          std::cerr << "design: need K-1 information fractions\n";
          return 2;
        }
        if (d_imax <= 0.0) {
          std::cerr << "design: canonical mode requires --i-max\n";
          return 2;
        }
        std::vector<double> interim, decision;
        for (double f : d_fractions) {
          interim.push_back(f * d_imax);
          decision.push_back(f * d_imax);
        }
        decision.push_back(d_imax);
        model = gst::make_canonical_model(interim, decision);
      } else {
        std::cerr << "design: give either --info-fractions or --setting\n";
        return 2;
      }
      const auto seed = d_seed ? *d_seed : 20240901;
      const auto bounds = gst::solve_boundaries(model, spec, 1 << 20, seed);
      const double i_max = spec.i_max > 0.0 ? spec.i_max : model.info_decision.back();
      json stages = json::array();
      double f_prev = 0.0, g_prev = 0.0;
      for (int k = 1; k < d_stages; ++k) {
        const double t = std::min(model.info_interim[k - 1] / i_max, 1.0);
        stages.push_back({{"stage", k},
                          {"info", model.info_interim[k - 1]},
                          {"info_fraction", t},
                          {"type_i_spent", spec.f(t) - f_prev},
                          {"type_ii_spent", spec.g(t) - g_prev},
                          {"u", bounds.u[k - 1]},
                          {"l", bounds.l[k - 1]},
                          {"c", bounds.c[k - 1]}});
        f_prev = spec.f(t);
        g_prev = spec.g(t);
      }
      stages.push_back({{"stage", d_stages},
                        {"info", model.info_decision.back()},
                        {"info_fraction", 1.0},
                        {"type_i_spent", spec.alpha - f_prev},
                        {"type_ii_spent", spec.beta - g_prev},
                        {"c", bounds.c[d_stages - 1]}});
      json out = {{"k_stages", d_stages}, {"alpha", d_alpha},   {"beta", d_beta},
                  {"delta", d_delta},     {"i_max", i_max},     {"stages", stages}};
      std::cout << out.dump(2) << '\n';
      return 0;
    }

    if (sim->parsed()) {
      const auto seed = resolve_seed(sim, s_seed);
      const auto kind =
          s_estimator == "unadjusted" ? gst::EstimatorKind::unadjusted : gst::EstimatorKind::tmle;
      auto cfg = make_dgm_config(s_setting, 0.122, s_reset_effect, s_reset_noise);
      gst::ErrorSpendingSpec spec;
      const auto oc = gst::simulate_operating_characteristics(cfg, spec, kind, s_nmax, s_trials,
                                                              seed, s_workers);
      if (!s_out.empty()) {
        std::ofstream os(s_out);
        if (!os) throw std::runtime_error("cannot write " + s_out);
        os << "estimator,setting,n_max,type_i,power,ess_null,ess_alt,n_trials,n_failed\n";
        os << s_estimator << ',' << s_setting << ',' << s_nmax << ',' << oc.type_i << ','
           << oc.power << ',' << oc.ess_null << ',' << oc.ess_alt << ',' << oc.n_trials << ','
           << oc.n_failed << '\n';
        os << "stage,stop_fraction_alt\n";
        for (std::size_t k = 0; k < oc.stop_stage_dist.size(); ++k)
          os << (k + 1) << ',' << oc.stop_stage_dist[k] << '\n';
      }
      json out = {{"estimator", s_estimator},
                  {"setting", s_setting},
                  {"n_max", s_nmax},
                  {"type_i", oc.type_i},
                  {"power", oc.power},
                  {"ess_null", oc.ess_null},
                  {"ess_alt", oc.ess_alt},
                  {"stop_stage_dist", oc.stop_stage_dist},
                  {"n_trials", oc.n_trials},
                  {"n_failed", oc.n_failed}};
      std::cout << out.dump(2) << '\n';
      return 0;
    }

    if (pw->parsed()) {
      const auto seed = resolve_seed(pw, p_seed);
      const auto kind =
          p_estimator == "unadjusted" ? gst::EstimatorKind::unadjusted : gst::EstimatorKind::tmle;
      auto cfg = make_dgm_config(p_setting, 0.122, -1.0, -1.0);
      gst::ErrorSpendingSpec spec;
      const int n = gst::search_n_max(cfg, spec, kind, p_target, p_trials, seed, p_workers);
      std::cout << n << '\n';
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
