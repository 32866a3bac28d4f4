#include "walklab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "walklab/errors.hpp"
#include "walklab/identity.hpp"
#include "walklab/parallel.hpp"
#include "walklab/special_functions.hpp"
#include "walklab/tolerances.hpp"

namespace walklab {

void Table::write_csv(std::ostream& out) const {
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  std::ostringstream cell;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      cell.str("");
      cell << std::setprecision(17) << row[c];
      out << (c ? "," : "") << cell.str();
    }
    out << '\n';
  }
}

bool ExperimentOutcome::passed() const { return first_failure() == nullptr; }

const TestReport* ExperimentOutcome::first_failure() const {
  for (const auto& c : checks) {
    if (!c.passed()) return &c;
  }
  return nullptr;
}

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(0xd1b54a32d192ed03ULL * (stream + 1)));
}

namespace {

TestReport make_check(std::string name, double statistic, bool ok, double level = 0.0) {
  TestReport r;
  r.name = std::move(name);
  r.statistic = statistic;
  r.p_value = std::numeric_limits<double>::quiet_NaN();
  r.level = level;
  r.decision = ok ? Decision::pass : Decision::reject;
  return r;
}

TestReport renamed(TestReport r, std::string name) {
  r.name = std::move(name);
  return r;
}

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

void require_samples(std::size_t n, const char* what) {
  if (n < kMinStatisticalSamples) {
    throw ParameterError(std::string(what) + " must be at least " +
                         std::to_string(kMinStatisticalSamples) + ", got " + std::to_string(n));
  }
}

GraphPtr share(DirectedGraph g) { return std::make_shared<const DirectedGraph>(std::move(g)); }

// Two-sample KS of x[first half] against sign * y[second half].
TestReport split_halves(const std::string& name, const std::vector<double>& x,
                        const std::vector<double>& y, double sign, double level) {
  const std::size_t half = x.size() / 2;
  std::vector<double> a(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<double> b(y.begin() + static_cast<std::ptrdiff_t>(half), y.end());
  for (auto& v : b) v *= sign;
  auto r = ks_two_sample(a, b, level);
  r.name = name;
  return r;
}

std::vector<double> sorted_copy(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

void add_bins(ExperimentOutcome& out, const std::string& prefix, const BinnedReport& rep) {
  for (const auto& b : rep.bins) out.details.push_back(renamed(b, prefix + "_bin"));
}

// PIT in parallel chunks; gig_pit is pure.
std::vector<double> parallel_pit(const std::vector<double>& gamma, const std::vector<double>& s,
                                 double order, int workers) {
  const std::size_t chunk = 4096;
  const std::size_t chunks = (gamma.size() + chunk - 1) / chunk;
  const auto parts = parallel_map(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(gamma.size(), lo + chunk);
    return gig_pit(std::span(gamma).subspan(lo, hi - lo), std::span(s).subspan(lo, hi - lo), order);
  });
  std::vector<double> u;
  u.reserve(gamma.size());
  for (const auto& p : parts) u.insert(u.end(), p.begin(), p.end());
  return u;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace

TestReport pass_rate_check(const std::string& name, const BinnedReport& report, double min_rate) {
  const std::size_t conclusive = report.bins.size() - report.inconclusive;
  TestReport r = make_check(name, report.pass_rate(), conclusive > 0 && report.pass_rate() >= min_rate,
                            report.bins.empty() ? 0.0 : report.bins.front().level);
  if (conclusive == 0) r.decision = Decision::inconclusive;
  r.n1 = report.used;
  r.meta["bins"] = static_cast<double>(report.bins.size());
  r.meta["conclusive"] = static_cast<double>(conclusive);
  r.meta["inconclusive"] = static_cast<double>(report.inconclusive);
  r.meta["dropped_low"] = static_cast<double>(report.dropped_low);
  r.meta["dropped_high"] = static_cast<double>(report.dropped_high);
  r.meta["min_pass_rate"] = min_rate;
  return r;
}

// ---------------------------------------------------------------------------

ExperimentOutcome run_verify_identity(const IdentityConfig& cfg, const RunContext& ctx) {
  require_samples(cfg.samples, "samples");
  const auto& t = cfg.target;
  const IdentitySampler sampler(t.graph, t.alpha, t.i0, t.j0);
  const auto draws = parallel_replicates(cfg.samples, ctx.workers, ctx.seed,
                                         [&](std::size_t, Rng& rng) { return sampler(rng); });

  ExperimentOutcome out;
  out.command = "verify-identity";
  std::vector<double> gam(draws.size()), s(draws.size()), hp(draws.size()), hm(draws.size());
  for (std::size_t k = 0; k < draws.size(); ++k) {
    gam[k] = draws[k].gamma_stat;
    s[k] = draws[k].s_stat;
    hp[k] = draws[k].h_plus;
    hm[k] = draws[k].h_minus;
  }
  const double gamma = sampler.gamma();
  const auto binned = binned_conditional_test(gam, s, gamma, cfg.binned);
  out.checks.push_back(pass_rate_check("conditional_gig", binned, cfg.min_pass_rate));
  add_bins(out, "conditional_gig", binned);
  if (gamma <= tol::divergence) {
    out.checks.push_back(split_halves("symmetry_s", s, s, -1.0, cfg.binned.level));
    out.checks.push_back(split_halves("symmetry_h", hp, hm, 1.0, cfg.binned.level));
  }
  out.summary["gamma"] = gamma;
  out.summary["samples"] = static_cast<double>(cfg.samples);
  out.summary["vertices"] = t.graph->vertex_count();
  out.summary["edges"] = t.graph->edge_count();
  out.summary["i0"] = t.i0;
  out.summary["j0"] = t.j0;
  out.summary["median_gamma"] = median_of(gam);
  out.summary["median_s"] = median_of(s);
  if (cfg.records) {
    Table rec{{"replicate", "gamma", "s", "h_plus", "h_minus"}, {}};
    rec.rows.reserve(draws.size());
    for (std::size_t k = 0; k < draws.size(); ++k) {
      rec.rows.push_back({static_cast<double>(k), gam[k], s[k], hp[k], hm[k]});
    }
    out.tables.emplace_back("records", std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutcome run_matsumoto_yor(const MatsumotoYorConfig& cfg, const RunContext& ctx) {
  require_samples(cfg.samples, "samples");
  if (!(cfg.alpha > 0.0) || !(cfg.beta > 0.0)) throw ParameterError("alpha and beta must be positive");
  if (cfg.n < 2) throw ParameterError("n must be at least 2");
  if (cfg.recursion_n < 1) throw ParameterError("recursion_n must be at least 1");
  ExperimentOutcome out;
  out.command = "matsumoto-yor";
  const double gamma = cfg.alpha - cfg.beta;

  // Recursion against closed form, and the escape identity by a solve.
  struct FieldErrors {
    double recursion = 0.0, escape_end = 0.0, escape_root = 0.0;
  };
  const GraphPtr seg = share(build_segment(cfg.recursion_n));
  const auto errs = parallel_replicates(
      cfg.recursion_fields, ctx.workers, stream_seed(ctx.seed, 1), [&](std::size_t, Rng& rng) {
        const auto w = sample_segment_gamma_field(cfg.recursion_n, cfg.alpha, cfg.beta, rng);
        const auto closed = my_chain(w);
        const auto rec = my_chain_recursive(w);
        FieldErrors e;
        for (std::size_t k = 0; k < closed.size(); ++k) {
          e.recursion = std::max(e.recursion, rel_diff(closed[k].gamma, rec[k].gamma));
        }
        // Environment built in extended precision from the weights: the
        // absorbing solve is otherwise limited by the rounding of omega.
        const auto env = environment_from_weights<long double>(seg, w.w.cast<long double>());
        const int n = cfg.recursion_n;
        const auto& last = closed.back();
        const long double to_root = hitting_prob(env, n, 0);
        const long double to_end = hitting_prob(env, 0, n);
        const double x_end = static_cast<double>(static_cast<long double>(w.w[2 * n - 1]) * to_root);
        const double x_root = static_cast<double>(static_cast<long double>(w.w[0]) * to_end);
        e.escape_end = rel_diff(std::exp(last.log_gamma - last.s), x_end);
        e.escape_root = rel_diff(std::exp(last.log_gamma + last.s), x_root);
        return e;
      });
  double rec_err = 0.0, esc_end = 0.0, esc_root = 0.0;
  for (const auto& e : errs) {
    rec_err = std::max(rec_err, e.recursion);
    esc_end = std::max(esc_end, e.escape_end);
    esc_root = std::max(esc_root, e.escape_root);
  }
  auto rc = make_check("recursion_vs_closed_form", rec_err, rec_err < cfg.recursion_tol, cfg.recursion_tol);
  rc.n1 = cfg.recursion_fields;
  out.checks.push_back(rc);
  auto ec = make_check("escape_identity", std::max(esc_end, esc_root),
                       std::max(esc_end, esc_root) < cfg.solve_tol, cfg.solve_tol);
  ec.n1 = cfg.recursion_fields;
  ec.meta["end"] = esc_end;
  ec.meta["root"] = esc_root;
  out.checks.push_back(ec);

  // W = 1: Gamma_k = 1/k, S_k = 0.
  {
    const GammaField ones{Eigen::VectorXd::Ones(2 * cfg.unit_table_n)};
    const auto closed = my_chain(ones);
    const auto rec = my_chain_recursive(ones);
    Table tab{{"k", "gamma_closed", "gamma_recursive", "expected", "s"}, {}};
    double worst = 0.0;
    for (int k = 1; k <= cfg.unit_table_n; ++k) {
      const auto& p = closed[k - 1];
      tab.rows.push_back({double(k), p.gamma, rec[k - 1].gamma, 1.0 / k, p.s});
      worst = std::max({worst, rel_diff(p.gamma, 1.0 / k), rel_diff(rec[k - 1].gamma, 1.0 / k),
                        std::abs(p.s)});
    }
    out.tables.emplace_back("unit_weights", std::move(tab));
    out.checks.push_back(make_check("unit_weights", worst, worst < 1e-12, 1e-12));
  }

  // Conditional law and Markov check.
  struct Draw {
    double prev = 0.0, gamma = 0.0, s = 0.0;
  };
  const auto draws = parallel_replicates(cfg.samples, ctx.workers, stream_seed(ctx.seed, 2),
                                         [&](std::size_t, Rng& rng) {
                                           const auto w =
                                               sample_segment_gamma_field(cfg.n, cfg.alpha, cfg.beta, rng);
                                           const auto c = my_chain(w);
                                           return Draw{c[cfg.n - 2].gamma, c[cfg.n - 1].gamma, c[cfg.n - 1].s};
                                         });
  std::vector<double> prev(draws.size()), gam(draws.size()), s(draws.size());
  for (std::size_t k = 0; k < draws.size(); ++k) {
    prev[k] = draws[k].prev;
    gam[k] = draws[k].gamma;
    s[k] = draws[k].s;
  }
  const auto binned = binned_conditional_test(gam, s, gamma, cfg.binned);
  out.checks.push_back(pass_rate_check("conditional_gig", binned, cfg.min_pass_rate));
  add_bins(out, "conditional_gig", binned);
  {
    // The other reference, reported only.
    BinnedOptions other = cfg.binned;
    other.reference = other.reference == BinReference::median ? BinReference::per_sample : BinReference::median;
    const auto alt = binned_conditional_test(gam, s, gamma, other);
    out.summary["pass_rate_other_reference"] = alt.pass_rate();
    add_bins(out, "conditional_gig_other_reference", alt);
  }

  {
    const auto u = parallel_pit(gam, s, gamma, ctx.workers);
    const std::size_t m = gam.size();
    std::vector<std::size_t> by_gamma(m);
    std::iota(by_gamma.begin(), by_gamma.end(), std::size_t{0});
    std::sort(by_gamma.begin(), by_gamma.end(), [&](auto a, auto b) { return gam[a] < gam[b]; });
    const int bins = cfg.markov_bins, strata = cfg.markov_strata, cats = cfg.markov_categories;
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(bins * strata, cats);
    for (int b = 0; b < bins; ++b) {
      const std::size_t lo = m * static_cast<std::size_t>(b) / bins;
      const std::size_t hi = m * static_cast<std::size_t>(b + 1) / bins;
      std::vector<std::size_t> idx(by_gamma.begin() + static_cast<std::ptrdiff_t>(lo),
                                   by_gamma.begin() + static_cast<std::ptrdiff_t>(hi));
      std::sort(idx.begin(), idx.end(), [&](auto a, auto c) { return prev[a] < prev[c]; });
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const int stratum = static_cast<int>(k * static_cast<std::size_t>(strata) / idx.size());
        const int cat = std::min(cats - 1, static_cast<int>(u[idx[k]] * cats));
        table(b * strata + stratum, cat) += 1.0;
      }
    }
    auto mk = chi_square_homogeneity(table, cfg.markov_level);
    mk.name = "markov_homogeneity";
    mk.meta["gamma_bins"] = bins;
    mk.meta["strata"] = strata;
    mk.meta["categories"] = cats;
    out.checks.push_back(mk);
    std::vector<double> su = sorted_copy(u);
    auto uni = ks_one_sample(su, [](double x) { return std::clamp(x, 0.0, 1.0); }, cfg.markov_level);
    uni.name = "pit_uniform";
    out.details.push_back(uni);
  }
  if (gamma == 0.0) out.checks.push_back(split_halves("symmetry_s", s, s, -1.0, cfg.binned.level));

  out.summary["gamma"] = gamma;
  out.summary["n"] = cfg.n;
  out.summary["samples"] = static_cast<double>(cfg.samples);
  out.summary["recursion_max_rel_error"] = rec_err;
  out.summary["escape_max_rel_error"] = std::max(esc_end, esc_root);
  out.summary["median_gamma_n"] = median_of(gam);
  if (cfg.records) {
    Table rec{{"replicate", "gamma_prev", "gamma", "s"}, {}};
    for (std::size_t k = 0; k < draws.size(); ++k) rec.rows.push_back({double(k), prev[k], gam[k], s[k]});
    out.tables.emplace_back("records", std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutcome run_torus_ratio(const TorusRatioConfig& cfg, const RunContext& ctx) {
  require_samples(cfg.environments, "environments");
  if (cfg.distances.empty()) throw ParameterError("distances must not be empty");
  ExperimentOutcome out;
  out.command = "torus-ratio";
  Table gtab{{"n", "environment", "distance", "gamma", "s"}, {}};
  Table mtab{{"n", "distance", "median_gamma", "p_gamma_below_delta", "p_tail_given_small",
              "small_count"},
             {}};
  for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
    const int n = cfg.sizes[si];
    for (int d : cfg.distances) {
      if (d < 1 || d >= n) {
        throw ParameterError("distance " + std::to_string(d) + " does not fit the torus of size " +
                             std::to_string(n));
      }
    }
    const auto torus = build_torus(n, cfg.alpha);
    const GraphPtr g = share(torus.graph);
    const VertexId origin = torus_vertex(n, 0, 0);
    std::vector<VertexId> targets;
    for (int d : cfg.distances) targets.push_back(torus_vertex(n, d, 0));
    extract_gamma(*g, torus.weights, origin, targets.front());
    const Eigen::VectorXd vw = vertex_weights(*g, torus.weights);

    struct EnvResult {
      std::vector<double> gamma, s;
      double route = 0.0, swap = 0.0;
    };
    const auto res = parallel_replicates(
        cfg.environments, ctx.workers, stream_seed(ctx.seed, 10 + si), [&](std::size_t r, Rng& rng) {
          const Environment env = sample_dirichlet_environment(g, torus.weights, rng);
          const double b0 = gamma_sample(GammaLaw{vw[origin]}, rng);
          const auto esc = escape_probabilities(env, origin, targets);
          EnvResult e;
          for (std::size_t k = 0; k < targets.size(); ++k) {
            const double by = gamma_sample(GammaLaw{vw[targets[k]]}, rng);
            const auto id = IdentitySample::from_hitting(b0 * esc[k].forward, by * esc[k].backward);
            e.gamma.push_back(id.gamma_stat);
            e.s.push_back(id.s_stat);
          }
          if (r < cfg.route_checks) {
            const auto pi = invariant_measure(env).pi;
            for (std::size_t k = 0; k < targets.size(); ++k) {
              const double hit_ratio = esc[k].forward / esc[k].backward;
              e.route = std::max(e.route, rel_diff(hit_ratio, pi[targets[k]] / pi[origin]));
              const VertexId back[1] = {origin};
              const auto sw = escape_probabilities(env, targets[k], back).front();
              e.swap = std::max(e.swap, std::abs(hit_ratio * (sw.forward / sw.backward) - 1.0));
            }
          }
          return e;
        });

    double route = 0.0, swap = 0.0;
    std::vector<double> xs, ys;
    std::vector<std::vector<double>> per_d(targets.size()), per_s(targets.size());
    for (std::size_t r = 0; r < res.size(); ++r) {
      route = std::max(route, res[r].route);
      swap = std::max(swap, res[r].swap);
      for (std::size_t k = 0; k < targets.size(); ++k) {
        xs.push_back(cfg.distances[k]);
        ys.push_back(res[r].gamma[k]);
        per_d[k].push_back(res[r].gamma[k]);
        per_s[k].push_back(res[r].s[k]);
        gtab.rows.push_back({double(n), double(r), double(cfg.distances[k]), res[r].gamma[k], res[r].s[k]});
      }
    }
    const std::string tag = "_n" + std::to_string(n);
    out.checks.push_back(make_check("ratio_routes" + tag, route, route < cfg.route_tol, cfg.route_tol));
    out.checks.push_back(make_check("swap_inversion" + tag, swap, swap < cfg.route_tol, cfg.route_tol));

    const auto sp = spearman(xs, ys);
    auto spc = make_check("spearman" + tag, sp.rho, sp.rho < 0.0 && sp.p_value < cfg.spearman_level,
                          cfg.spearman_level);
    spc.p_value = sp.p_value;
    spc.n1 = sp.n;
    out.checks.push_back(spc);

    std::vector<double> medians;
    bool decreasing = true;
    for (std::size_t k = 0; k < targets.size(); ++k) {
      medians.push_back(median_of(per_d[k]));
      if (k > 0 && !(medians[k] < medians[k - 1])) decreasing = false;
      std::size_t small = 0, tail = 0;
      const double threshold = std::pow(cfg.delta, -cfg.tail_exponent / 2.0);
      for (std::size_t r = 0; r < per_d[k].size(); ++r) {
        if (per_d[k][r] < cfg.delta) {
          ++small;
          if (std::exp(2.0 * per_s[k][r]) >= threshold) ++tail;
        }
      }
      const double nenv = static_cast<double>(per_d[k].size());
      mtab.rows.push_back({double(n), double(cfg.distances[k]), medians[k], small / nenv,
                           small ? double(tail) / small : std::numeric_limits<double>::quiet_NaN(),
                           double(small)});
      out.summary["median_gamma" + tag + "_d" + std::to_string(cfg.distances[k])] = medians[k];
    }
    auto mc = make_check("median_decreasing" + tag, medians.back() - medians.front(), decreasing);
    for (std::size_t k = 0; k < medians.size(); ++k) {
      mc.meta["median_d" + std::to_string(cfg.distances[k])] = medians[k];
    }
    out.checks.push_back(mc);
    out.summary["spearman_rho" + tag] = sp.rho;
    out.summary["spearman_p" + tag] = sp.p_value;
    out.summary["ratio_route_max_rel" + tag] = route;
  }
  out.summary["environments"] = static_cast<double>(cfg.environments);
  out.tables.emplace_back("gamma", std::move(gtab));
  out.tables.emplace_back("medians", std::move(mtab));
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutcome run_cemetery(const CemeteryConfig& cfg, const RunContext& ctx) {
  require_samples(cfg.walks, "walks");
  require_samples(cfg.draws, "draws");
  if (!(cfg.eps > 0.0)) throw ParameterError("eps must be positive");
  ExperimentOutcome out;
  out.command = "cemetery";

  const auto star = build_torus_star(cfg.n, cfg.alpha, cfg.eps);
  const GraphPtr g = share(star.graph);
  const VertexId origin = torus_vertex(cfg.n, 0, 0);
  const VertexId cemetery = 4 * cfg.n * cfg.n;

  // Visits to 0 before the cemetery for one fixed environment.
  Rng env_rng(stream_seed(ctx.seed, 20));
  const Environment env = sample_dirichlet_environment(g, star.weights, env_rng);
  const double p = passage_split(env, origin, cemetery).to_target;
  const WalkStepper stepper(env);
  const auto counts = parallel_replicates(cfg.walks, ctx.workers, stream_seed(ctx.seed, 21),
                                          [&](std::size_t, Rng& rng) {
                                            std::int64_t visits = 1;
                                            VertexId v = origin;
                                            for (;;) {
                                              v = stepper.step(v, rng);
                                              if (v == cemetery) return visits;
                                              if (v == origin) ++visits;
                                            }
                                          });
  auto geo = geometric_fit(counts, p, cfg.level);
  geo.name = "visits_geometric";
  out.checks.push_back(geo);
  out.summary["escape_probability"] = p;

  // E[beta_d omega(d, 0)] = eps.
  EdgeId cem_to_origin = -1;
  for (EdgeId e : g->out_edges(cemetery)) {
    if (g->edge(e).head == origin) cem_to_origin = e;
  }
  const double cem_weight = vertex_weights(*g, star.weights)[cemetery];
  const auto products = parallel_replicates(cfg.draws, ctx.workers, stream_seed(ctx.seed, 22),
                                            [&](std::size_t, Rng& rng) {
                                              const Environment w = sample_dirichlet_environment(g, star.weights, rng);
                                              return gamma_sample(GammaLaw{cem_weight}, rng) * w.prob(cem_to_origin);
                                            });
  const auto m = mean_ci(products, 0.95);
  const double z = std::abs(m.mean - cfg.eps) / m.std_error;
  auto ec = make_check("epsilon_mean", z, z <= 3.0, 3.0);
  ec.n1 = m.n;
  ec.meta["mean"] = m.mean;
  ec.meta["std_error"] = m.std_error;
  ec.meta["eps"] = cfg.eps;
  out.checks.push_back(ec);

  // Moments of pi(0) beta_d / pi(d).
  Table mt{{"n", "order", "mean", "std_error", "lo", "hi"}, {}};
  bool finite = true;
  for (std::size_t si = 0; si < cfg.moment_sizes.size(); ++si) {
    const int n = cfg.moment_sizes[si];
    const auto st = build_torus_star(n, cfg.alpha, cfg.eps);
    const GraphPtr sg = share(st.graph);
    const VertexId o = torus_vertex(n, 0, 0), c = 4 * n * n;
    const double bw = vertex_weights(*sg, st.weights)[c];
    const auto ratios = parallel_replicates(cfg.moment_environments, ctx.workers,
                                            stream_seed(ctx.seed, 30 + si), [&](std::size_t, Rng& rng) {
                                              const Environment e = sample_dirichlet_environment(sg, st.weights, rng);
                                              const auto pi = invariant_measure(e).pi;
                                              return pi[o] * gamma_sample(GammaLaw{bw}, rng) / pi[c];
                                            });
    for (double a : cfg.moment_orders) {
      std::vector<double> pw(ratios.size());
      for (std::size_t k = 0; k < ratios.size(); ++k) pw[k] = std::pow(ratios[k], a);
      const auto mm = mean_ci(pw, 0.95);
      mt.rows.push_back({double(n), a, mm.mean, mm.std_error, mm.lo, mm.hi});
      if (!std::isfinite(mm.mean) || !(mm.mean > 0.0) || !std::isfinite(mm.std_error)) finite = false;
    }
  }
  if (!cfg.moment_sizes.empty()) out.checks.push_back(make_check("moments_finite", 0.0, finite));
  out.tables.emplace_back("moments", std::move(mt));
  out.summary["kappa_global"] = kappa_global(cfg.alpha);
  out.summary["epsilon_mean"] = m.mean;
  out.summary["epsilon_std_error"] = m.std_error;
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutcome run_accelerate(const AccelerateConfig& cfg, const RunContext& ctx) {
  require_samples(cfg.environments, "environments");
  ExperimentOutcome out;
  out.command = "accelerate";
  const double kg = kappa_global(cfg.alpha);
  Table tab{{"radius", "paths", "kappa", "gamma_min", "gamma_median", "gamma_max", "gamma_mean"}, {}};
  for (std::size_t ri = 0; ri < cfg.radii.size(); ++ri) {
    const int radius = cfg.radii[ri];
    if (radius < 0) throw ParameterError("box radius must be non-negative");
    const int n = radius + 3;
    const auto torus = build_torus(n, cfg.alpha);
    const GraphPtr g = share(torus.graph);
    const auto box = lattice_box(radius);
    const auto paths = enumerate_paths_pi_lambda(*g, box);
    const auto sums = parallel_replicates(cfg.environments, ctx.workers, stream_seed(ctx.seed, 40 + ri),
                                          [&](std::size_t, Rng& rng) {
                                            const Environment env = sample_dirichlet_environment(g, torus.weights, rng);
                                            double total = 0.0;
                                            for (const auto& p : paths) total += path_weight(env, p);
                                            return total;
                                          });
    std::vector<double> gammas(sums.size());
    bool bounded = true;
    double worst_unit = 0.0;
    for (std::size_t k = 0; k < sums.size(); ++k) {
      if (!(sums[k] > 0.0) || !std::isfinite(sums[k]) || sums[k] > 1.0 + 1e-12) bounded = false;
      gammas[k] = 1.0 / sums[k];
      worst_unit = std::max(worst_unit, std::abs(gammas[k] - 1.0));
    }
    const std::string tag = "_r" + std::to_string(radius);
    out.checks.push_back(make_check("path_mass_bounds" + tag, 0.0, bounded));
    if (radius == 0) out.checks.push_back(make_check("unit_box" + tag, worst_unit, worst_unit < 1e-12, 1e-12));
    const double kl = kappa_of_lambda(box, cfg.alpha);
    auto kc = make_check("kappa_consistency" + tag, kl, kl >= kg - 1e-12);
    kc.meta["kappa_global"] = kg;
    out.checks.push_back(kc);
    const auto mean = std::accumulate(gammas.begin(), gammas.end(), 0.0) / gammas.size();
    tab.rows.push_back({double(radius), double(paths.size()), kl,
                        *std::min_element(gammas.begin(), gammas.end()), median_of(gammas),
                        *std::max_element(gammas.begin(), gammas.end()), mean});
    out.summary["kappa" + tag] = kl;
    out.summary["paths" + tag] = static_cast<double>(paths.size());
    out.summary["median_gamma" + tag] = median_of(gammas);
  }
  out.summary["kappa_global"] = kg;
  out.tables.emplace_back("boxes", std::move(tab));
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutcome run_time_reversal(const TimeReversalConfig& cfg, const RunContext& ctx) {
  require_samples(cfg.draws, "draws");
  ExperimentOutcome out;
  out.command = "time-reversal";
  const auto torus = build_torus(cfg.n, cfg.alpha);
  const GraphPtr g = share(torus.graph);
  const auto div = divergence(*g, torus.weights.alpha);
  if (div.cwiseAbs().maxCoeff() > tol::divergence) {
    throw PreconditionError("time reversal needs zero divergence; max |div| = " +
                            std::to_string(div.cwiseAbs().maxCoeff()));
  }
  const GraphPtr rg = share(reverse(*g));
  const int m = g->edge_count();

  struct Pair {
    Eigen::VectorXd reversed, fresh;
  };
  const auto draws = parallel_replicates(cfg.draws, ctx.workers, ctx.seed, [&](std::size_t, Rng& rng) {
    const Environment env = sample_dirichlet_environment(g, torus.weights, rng);
    const Environment rev = reversed_environment(env, rg);
    const Environment fresh = sample_dirichlet_environment(rg, torus.weights, rng);
    return Pair{rev.prob(), fresh.prob()};
  });
  const VertexId origin = torus_vertex(cfg.n, 0, 0);
  std::vector<bool> gating(static_cast<std::size_t>(m), false);
  for (EdgeId e : rg->out_edges(origin)) gating[e] = true;
  std::size_t rejected_all = 0;
  std::vector<double> a(draws.size()), b(draws.size());
  for (EdgeId e = 0; e < m; ++e) {
    for (std::size_t k = 0; k < draws.size(); ++k) {
      a[k] = draws[k].reversed[e];
      b[k] = draws[k].fresh[e];
    }
    auto r = ks_two_sample(a, b, cfg.level);
    r.name = "reversed_edge_" + std::to_string(e);
    r.meta["edge"] = e;
    r.meta["tail"] = rg->edge(e).tail;
    r.meta["head"] = rg->edge(e).head;
    if (!r.passed()) ++rejected_all;
    if (gating[e]) out.checks.push_back(r);
    out.details.push_back(std::move(r));
  }
  out.summary["edges"] = m;
  out.summary["edges_rejected"] = static_cast<double>(rejected_all);
  out.summary["expected_rejections"] = cfg.level * m;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Exact binomial upper tail P(X >= k).
double binomial_sf(std::size_t n, double p, std::size_t k) {
  double total = 0.0;
  for (std::size_t j = k; j <= n; ++j) {
    total += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) +
                      j * std::log(p) + (n - j) * std::log1p(-p));
  }
  return std::min(1.0, total);
}

}  // namespace

ExperimentOutcome run_selftest(const SelftestConfig& cfg, const RunContext& ctx) {
  ExperimentOutcome out;
  out.command = "selftest";
  const double eps = cfg.perturbation;

  // K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}.
  double half = 0.0;
  for (double x : {0.1, 1.0, 10.0}) {
    const double exact = std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x);
    half = std::max(half, rel_diff(bessel_k(0.5, x) + eps, exact));
  }
  out.checks.push_back(make_check("bessel_half_order", half, half < 1e-10, 1e-10));

  // K_{v+1}(x) = K_{v-1}(x) + (2v/x) K_v(x).
  double recur = 0.0;
  for (double v : {0.3, 1.0, 2.5, 7.0}) {
    for (double x : {0.05, 0.7, 3.0, 25.0}) {
      const double lhs = bessel_k(v + 1.0, x) + eps;
      const double rhs = bessel_k(v - 1.0, x) + 2.0 * v / x * bessel_k(v, x);
      recur = std::max(recur, rel_diff(lhs, rhs));
    }
  }
  out.checks.push_back(make_check("bessel_recurrence", recur, recur < 1e-8, 1e-8));

  // Normalization of the S-law by a trapezoid sum on a wide grid.
  double norm = 0.0;
  for (double order : {-2.0, 0.0, 0.5, 3.0}) {
    for (double coef : {0.2, 2.0, 20.0}) {
      const GigLaw law{order, coef};
      const double lnz = law.log_normalizer();
      const double h = 1e-3;
      double total = 0.0;
      for (double s = -40.0; s <= 40.0; s += h) total += std::exp(order * s - coef * std::cosh(s) - lnz);
      norm = std::max(norm, std::abs(total * h + eps - 1.0));
    }
  }
  out.checks.push_back(make_check("gig_normalization", norm, norm < 1e-8, 1e-8));

  // Sampler calibration: KS rejections at 1% across a parameter grid must
  // be consistent with 1%.
  {
    struct Point {
      double order, coef;
    };
    std::vector<Point> grid;
    for (double order : {-2.0, 0.0, 0.5, 1.0, 3.0}) {
      for (double coef : {0.1, 1.0, 10.0}) grid.push_back({order, coef});
    }
    const std::size_t reps = cfg.calibration_repeats;
    const auto rejected = parallel_replicates(grid.size() * reps, ctx.workers, stream_seed(ctx.seed, 50),
                                              [&](std::size_t r, Rng& rng) {
                                                const GigLaw law{grid[r / reps].order, grid[r / reps].coef};
                                                std::vector<double> xs(cfg.calibration_draws);
                                                for (auto& x : xs) x = gig_sample(law, rng) + eps;
                                                std::sort(xs.begin(), xs.end());
                                                const auto rep = ks_one_sample_batch(
                                                    xs, [&](std::span<const double> v) { return gig_cdf_s_sorted(law, v); },
                                                    0.01);
                                                return rep.passed() ? 0 : 1;
                                              });
    const std::size_t total = grid.size() * reps;
    const std::size_t k = static_cast<std::size_t>(std::accumulate(rejected.begin(), rejected.end(), 0));
    const double upper = binomial_sf(total, 0.01, k);
    const double lower = 1.0 - binomial_sf(total, 0.01, k + 1);
    const double p = std::min(1.0, 2.0 * std::min(upper, lower));
    auto c = make_check("gig_sampler_calibration", static_cast<double>(k) / total, p > 0.001, 0.001);
    c.p_value = p;
    c.n1 = total;
    c.meta["rejections"] = static_cast<double>(k);
    c.meta["grid_points"] = static_cast<double>(grid.size());
    out.checks.push_back(c);
  }

  // Exact solvers on a seeded random segment and random graphs.
  Rng rng(stream_seed(ctx.seed, 51));
  {
    const int n = 12;
    const GraphPtr seg = share(build_segment(n));
    Eigen::VectorXd w(2 * n);
    for (auto& x : w) x = 0.2 + rng.uniform();
    const Environment env = environment_from_weights<double>(seg, w);
    std::vector<double> rho(n - 1);
    for (int i = 1; i < n; ++i) rho[i - 1] = env.prob(2 * i - 1) / env.prob(2 * i);
    double worst = 0.0;
    for (int x = 1; x < n; ++x) {
      // P_x(H_n < H_0) from the solve: absorb at 0 and n.
      const Eigen::MatrixXd p = env.transition_matrix();
      Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n - 1, n - 1) - p.block(1, 1, n - 1, n - 1);
      const Eigen::VectorXd h = a.partialPivLu().solve(p.block(1, n, n - 1, 1));
      worst = std::max(worst, rel_diff(gambler_ruin<double>(rho, 0, x, n) + eps, h[x - 1]));
    }
    out.checks.push_back(make_check("gambler_ruin", worst, worst < 1e-12, 1e-12));
  }
  {
    double resid = 0.0, ratio = 0.0, green = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const int nv = 3 + rep % 10;
      const GraphPtr g = share(random_strongly_connected(nv, nv, rng));
      EdgeWeights a{Eigen::VectorXd::Constant(g->edge_count(), 1.0)};
      const Environment env = sample_dirichlet_environment(g, a, rng);
      const auto im = invariant_measure(env);
      resid = std::max(resid, im.residual + std::abs(eps));
      const VertexId targets[1] = {nv - 1};
      const auto esc = escape_probabilities(env, 0, targets).front();
      ratio = std::max(ratio, rel_diff(im.pi[nv - 1] / im.pi[0] + eps, esc.forward / esc.backward));
      std::vector<VertexId> sub;
      for (VertexId v = 1; v < nv; ++v) sub.push_back(v);
      const auto gm = green_matrix(env, sub);
      const auto k = restricted_kernel(env, sub);
      const auto id = Eigen::MatrixXd::Identity(nv - 1, nv - 1);
      green = std::max(green, (gm * (id - k) - id).cwiseAbs().maxCoeff() + std::abs(eps));
    }
    out.checks.push_back(make_check("invariant_residual", resid, resid < tol::residual_abs, tol::residual_abs));
    out.checks.push_back(make_check("ratio_identity", ratio, ratio < 1e-10, 1e-10));
    out.checks.push_back(make_check("green_inverse", green, green < tol::green_inverse, tol::green_inverse));
  }
  out.summary["perturbation"] = eps;
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutcome run_mixing(const MixingConfig& cfg, const RunContext& ctx) {
  require_samples(cfg.replicates, "replicates");
  ExperimentOutcome out;
  out.command = "mixing";
  const auto seg = build_weighted_segment(cfg.n, cfg.forward, cfg.backward);
  const GraphPtr g = share(seg.graph);
  const double gamma = extract_gamma(*g, seg.weights, 0, cfg.n);
  const int m = g->edge_count(), nv = g->vertex_count();

  struct Rep {
    Eigen::VectorXd wu, beta, omega;
  };
  const auto reps = parallel_replicates(cfg.replicates, ctx.workers, ctx.seed, [&](std::size_t, Rng& rng) {
    const auto w = sample_gamma_field(*g, seg.weights, rng);
    const auto u = sample_u_field_segment(w, gamma, rng);
    auto mixed = mix_environment(g, w, u);
    return Rep{std::move(mixed.w_u.w), std::move(mixed.beta), mixed.omega.prob()};
  });
  const std::size_t r = reps.size();
  std::vector<double> col(r);
  std::size_t failed_edges = 0, failed_vertices = 0;
  double worst_p = 1.0;
  for (EdgeId e = 0; e < m; ++e) {
    for (std::size_t k = 0; k < r; ++k) col[k] = reps[k].wu[e];
    std::sort(col.begin(), col.end());
    const double shape = seg.weights.alpha[e];
    auto rep = ks_one_sample(col, [shape](double x) { return gamma_cdf(shape, x); }, cfg.level);
    rep.name = "edge_" + std::to_string(e);
    worst_p = std::min(worst_p, rep.p_value);
    if (!rep.passed()) ++failed_edges;
    out.details.push_back(rep);
  }
  auto ec = make_check("edge_marginals", worst_p, failed_edges == 0, cfg.level);
  ec.p_value = worst_p;
  ec.meta["edges"] = m;
  ec.meta["failed"] = static_cast<double>(failed_edges);
  out.checks.push_back(ec);

  const Eigen::VectorXd vw = vertex_weights(*g, seg.weights);
  worst_p = 1.0;
  for (VertexId v = 0; v < nv; ++v) {
    for (std::size_t k = 0; k < r; ++k) col[k] = reps[k].beta[v];
    std::sort(col.begin(), col.end());
    const double shape = vw[v];
    auto rep = ks_one_sample(col, [shape](double x) { return gamma_cdf(shape, x); }, cfg.level);
    rep.name = "beta_" + std::to_string(v);
    worst_p = std::min(worst_p, rep.p_value);
    if (!rep.passed()) ++failed_vertices;
    out.details.push_back(rep);
  }
  auto bc = make_check("beta_marginals", worst_p, failed_vertices == 0, cfg.level);
  bc.p_value = worst_p;
  bc.meta["vertices"] = nv;
  bc.meta["failed"] = static_cast<double>(failed_vertices);
  out.checks.push_back(bc);

  // Correlation screens: beta pairs and omega against beta at its tail.
  const double bound = 3.0 / std::sqrt(static_cast<double>(r));
  std::vector<double> x(r), y(r);
  double worst_beta = 0.0, worst_omega = 0.0;
  for (VertexId v = 0; v + 1 < nv; ++v) {
    for (std::size_t k = 0; k < r; ++k) {
      x[k] = reps[k].beta[v];
      y[k] = reps[k].beta[v + 1];
    }
    worst_beta = std::max(worst_beta, std::abs(sample_correlation(x, y)));
  }
  for (EdgeId e = 0; e < m; ++e) {
    if (g->out_edges(g->edge(e).tail).size() < 2) continue;
    for (std::size_t k = 0; k < r; ++k) {
      x[k] = reps[k].omega[e];
      y[k] = reps[k].beta[g->edge(e).tail];
    }
    worst_omega = std::max(worst_omega, std::abs(sample_correlation(x, y)));
  }
  out.summary["max_abs_corr_beta_neighbours"] = worst_beta;
  out.summary["max_abs_corr_omega_beta"] = worst_omega;
  out.summary["correlation_bound"] = bound;
  out.summary["gamma"] = gamma;
  return out;
}

ExperimentOutcome run_interpretation(const InterpretationConfig& cfg, const RunContext& ctx) {
  if (cfg.max_vertices < 2) throw ParameterError("max_vertices must be at least 2");
  ExperimentOutcome out;
  out.command = "interpretation";
  struct Res {
    double disc = 0.0, s = 0.0, pi = 0.0;
    bool m_matrix = true, ok = false;
    int vertices = 0;
  };
  const auto res = parallel_replicates(cfg.graphs, ctx.workers, ctx.seed, [&](std::size_t, Rng& rng) {
    const int nv = 2 + static_cast<int>(rng.uniform() * (cfg.max_vertices - 1));
    const int extra = static_cast<int>(rng.uniform() * 2 * nv);
    const GraphPtr g = share(random_strongly_connected(nv, extra, rng));
    const VertexId j0 = nv - 1;
    const double gamma = 2.0 * rng.uniform();
    const auto a = random_divergence_weights(*g, 0, j0, gamma, rng);
    const auto w = sample_gamma_field(*g, a, rng);
    const auto u = sample_u_field_gibbs(*g, w, gamma, 0, j0, kGibbsBurnInFloor, rng);
    const auto rep = check_interpretation(g, w, u, 0, j0);
    return Res{rep.max_rel_discrepancy, std::abs(rep.s_from_matrix - rep.s_direct),
               rep.pi_ratio_discrepancy, rep.m_matrix, rep.ok, nv};
  });
  double disc = 0.0, s = 0.0, pi = 0.0;
  std::size_t not_m = 0;
  for (const auto& r : res) {
    disc = std::max(disc, r.disc);
    s = std::max(s, r.s);
    pi = std::max(pi, r.pi);
    if (!r.m_matrix) ++not_m;
  }
  auto c = make_check("routes_agree", disc, disc < cfg.tol && not_m == 0, cfg.tol);
  c.n1 = res.size();
  c.meta["not_m_matrix"] = static_cast<double>(not_m);
  out.checks.push_back(c);
  out.checks.push_back(make_check("s_identity", s, s < cfg.tol, cfg.tol));
  out.checks.push_back(make_check("pi_ratio", pi, pi < cfg.tol, cfg.tol));
  return out;
}

ExperimentOutcome run_rearrangement(const RearrangementConfig& cfg) {
  if (cfg.laws.empty()) throw ParameterError("rearrangement needs at least one law");
  ExperimentOutcome out;
  out.command = "rearrangement";
  std::size_t configs = 0, violations = 0, equality_mismatch = 0;
  for (std::size_t li = 0; li < cfg.laws.size(); ++li) {
    const auto& law = cfg.laws[li];
    for (int size = 1; size <= cfg.max_size; ++size) {
      // All subsets of the universe of this size, in lexicographic order.
      std::vector<std::vector<int>> subsets;
      std::vector<int> mask(static_cast<std::size_t>(cfg.universe), 0);
      std::fill(mask.end() - size, mask.end(), 1);
      do {
        std::vector<int> s;
        for (int i = 0; i < cfg.universe; ++i) {
          if (mask[i]) s.push_back(i);
        }
        subsets.push_back(std::move(s));
      } while (std::next_permutation(mask.begin(), mask.end()));
      const int count = static_cast<int>(subsets.size());
      for (int k = 1; k <= cfg.max_subsets; ++k) {
        // Non-decreasing index tuples: multisets of k subsets.
        std::vector<int> pick(static_cast<std::size_t>(k), 0);
        for (;;) {
          std::vector<std::vector<int>> chosen;
          for (int p : pick) chosen.push_back(subsets[p]);
          const auto r = rearrangement_check(law, cfg.universe, chosen);
          const bool same = std::all_of(pick.begin(), pick.end(), [&](int p) { return p == pick.front(); });
          ++configs;
          if (!r.holds) ++violations;
          if (r.equal != same) ++equality_mismatch;
          int pos = k - 1;
          while (pos >= 0 && pick[pos] == count - 1) --pos;
          if (pos < 0) break;
          ++pick[pos];
          for (int q = pos + 1; q < k; ++q) pick[q] = pick[pos];
        }
      }
    }
  }
  auto h = make_check("inequality_holds", static_cast<double>(violations), violations == 0);
  h.n1 = configs;
  out.checks.push_back(h);
  auto e = make_check("equality_iff_coincide", static_cast<double>(equality_mismatch), equality_mismatch == 0);
  e.n1 = configs;
  out.checks.push_back(e);
  out.summary["configurations"] = static_cast<double>(configs);
  return out;
}

}  // namespace walklab
