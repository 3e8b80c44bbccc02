#include "bilevel/problem_factory.hpp"

#include "bilevel/jsonutil.hpp"

namespace bilevel {

using jsonutil::get_or;
using jsonutil::reject_unknown_keys;
using nlohmann::json;

namespace {

Vec parse_theta0(const json& cfg, std::size_t dim, const Vec& fallback) {
  if (!cfg.contains("theta0")) return fallback;
  const json& t = cfg.at("theta0");
  if (t.is_number()) {
    Vec v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = t.get<double>();
    return v;
  }
  if (!t.is_array()) fail(ErrorKind::config, "bad value type at problem.theta0");
  if (t.size() != dim)
    fail(ErrorKind::config, "problem.theta0: got " + std::to_string(t.size()) +
                                " entries, problem wants " + std::to_string(dim));
  Vec v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    if (!t[i].is_number()) fail(ErrorKind::config, "bad value type at problem.theta0");
    v[i] = t[i].get<double>();
  }
  require_finite(v, "problem.theta0");
  return v;
}

QuadraticBilevel::RandomOptions quad_options(const json& cfg) {
  QuadraticBilevel::RandomOptions o;
  o.phi_dim = get_or<std::size_t>(cfg, "problem", "phi_dim", 10);
  o.theta_dim = get_or<std::size_t>(cfg, "problem", "theta_dim", 4);
  o.mu = get_or<double>(cfg, "problem", "mu", 0.5);
  o.smoothness = get_or<double>(cfg, "problem", "smoothness", 3.0);
  o.gamma = get_or<double>(cfg, "problem", "gamma", 0.0);
  return o;
}

RidgeHyperopt::Options ridge_options(const json& cfg) {
  RidgeHyperopt::Options o;
  o.n_train = get_or<std::size_t>(cfg, "problem", "n_train", 60);
  o.n_val = get_or<std::size_t>(cfg, "problem", "n_val", 40);
  o.features = get_or<std::size_t>(cfg, "problem", "features", 10);
  o.per_coordinate = get_or<bool>(cfg, "problem", "per_coordinate", false);
  o.noise = get_or<double>(cfg, "problem", "noise", 0.1);
  o.target = get_or<std::string>(cfg, "problem", "target", "linear");
  return o;
}

MetaRidge::Options meta_options(const json& cfg) {
  MetaRidge::Options o;
  o.features = get_or<std::size_t>(cfg, "problem", "features", 8);
  o.train_per_task = get_or<std::size_t>(cfg, "problem", "train_per_task", 20);
  o.val_per_task = get_or<std::size_t>(cfg, "problem", "val_per_task", 5);
  o.noise = get_or<double>(cfg, "problem", "noise", 0.1);
  o.task_spread = get_or<double>(cfg, "problem", "task_spread", 0.3);
  return o;
}

std::vector<std::size_t> pcnet_layers(const json& cfg) {
  std::vector<std::size_t> layers =
      get_or<std::vector<std::size_t>>(cfg, "problem", "layers", {2, 3, 1});
  return layers;
}

}  // namespace

ProblemInstance make_problem(const json& cfg) {
  const std::string name = jsonutil::require<std::string>(cfg, "problem", "name");
  const std::uint64_t seed = get_or<std::uint64_t>(cfg, "problem", "seed", 0);
  ProblemInstance inst;
  inst.name = name;

  if (name == "p1") {
    reject_unknown_keys(cfg, "problem", {"name", "theta0"});
    inst.problem = std::make_unique<QuadraticBilevel>(QuadraticBilevel::p1());
    inst.theta0 = parse_theta0(cfg, 1, Vec::zeros(1));
  } else if (name == "quad") {
    reject_unknown_keys(cfg, "problem",
                        {"name", "seed", "phi_dim", "theta_dim", "mu", "smoothness", "gamma",
                         "theta0"});
    const auto opts = quad_options(cfg);
    inst.problem = std::make_unique<QuadraticBilevel>(QuadraticBilevel::random(seed, opts));
    inst.theta0 = parse_theta0(cfg, opts.theta_dim, Vec::zeros(opts.theta_dim));
  } else if (name == "ridge") {
    reject_unknown_keys(cfg, "problem",
                        {"name", "seed", "n_train", "n_val", "features", "per_coordinate", "noise",
                         "target", "theta0"});
    const auto opts = ridge_options(cfg);
    auto ridge = std::make_unique<RidgeHyperopt>(RidgeHyperopt::synthetic(seed, opts));
    const std::size_t td = ridge->theta_dim();
    inst.problem = std::move(ridge);
    inst.theta0 = parse_theta0(cfg, td, Vec::zeros(td));
  } else if (name == "meta_ridge") {
    reject_unknown_keys(cfg, "problem",
                        {"name", "seed", "features", "train_per_task", "val_per_task", "noise",
                         "task_spread", "theta0"});
    inst.meta = std::make_unique<MetaRidge>(seed, meta_options(cfg));
    inst.theta0 = parse_theta0(cfg, inst.meta->theta_dim(), Vec::zeros(inst.meta->theta_dim()));
  } else if (name == "pcnet") {
    reject_unknown_keys(cfg, "problem", {"name", "seed", "layers", "theta0"});
    auto net = std::make_unique<PredictiveCodingNet>(
        PredictiveCodingNet::random(seed, pcnet_layers(cfg)));
    Vec theta0 = parse_theta0(cfg, net->theta_dim(), net->initial_theta());
    inst.problem = std::move(net);
    inst.theta0 = std::move(theta0);
  } else {
    fail(ErrorKind::config,
         "problem.name: unknown problem '" + name + "' (want p1|quad|ridge|meta_ridge|pcnet)");
  }
  return inst;
}

json materialize_problem_config(const json& cfg) {
  ProblemInstance inst = make_problem(cfg);  // validates and applies defaults
  json out;
  out["name"] = inst.name;
  const std::string name = inst.name;
  if (name != "p1") out["seed"] = get_or<std::uint64_t>(cfg, "problem", "seed", 0);
  if (name == "quad") {
    const auto o = quad_options(cfg);
    out["phi_dim"] = o.phi_dim;
    out["theta_dim"] = o.theta_dim;
    out["mu"] = o.mu;
    out["smoothness"] = o.smoothness;
    out["gamma"] = o.gamma;
  } else if (name == "ridge") {
    const auto o = ridge_options(cfg);
    out["n_train"] = o.n_train;
    out["n_val"] = o.n_val;
    out["features"] = o.features;
    out["per_coordinate"] = o.per_coordinate;
    out["noise"] = o.noise;
    out["target"] = o.target;
  } else if (name == "meta_ridge") {
    const auto o = meta_options(cfg);
    out["features"] = o.features;
    out["train_per_task"] = o.train_per_task;
    out["val_per_task"] = o.val_per_task;
    out["noise"] = o.noise;
    out["task_spread"] = o.task_spread;
  } else if (name == "pcnet") {
    out["layers"] = pcnet_layers(cfg);
  }
  out["theta0"] = inst.theta0.raw();
  return out;
}

}  // namespace bilevel
