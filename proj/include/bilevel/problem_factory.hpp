#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "bilevel/problems.hpp"

namespace bilevel {

// A constructed problem plus its natural starting outer parameters. Exactly
// one of `problem` / `meta` is set; meta-learning runs sample tasks per step
// instead of holding one fixed objective.
struct ProblemInstance {
  std::string name;
  std::unique_ptr<BilevelProblem> problem;
  std::unique_ptr<MetaRidge> meta;
  Vec theta0;

  bool is_meta() const { return meta != nullptr; }
  std::size_t theta_dim() const { return is_meta() ? meta->theta_dim() : problem->theta_dim(); }
};

// Builds a problem from its JSON config. Supported names: "p1", "quad",
// "ridge", "meta_ridge", "pcnet". Unknown keys anywhere are rejected with the
// offending path. "theta0" (array, or scalar-broadcast) overrides the default
// starting point where the problem has one.
ProblemInstance make_problem(const nlohmann::json& cfg);

// The materialized config: every default the factory filled in, written out.
nlohmann::json materialize_problem_config(const nlohmann::json& cfg);

}  // namespace bilevel
