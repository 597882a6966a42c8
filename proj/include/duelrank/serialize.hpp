#pragma once

#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "duelrank/instance.hpp"
#include "duelrank/pipelines.hpp"

namespace duelrank {

inline constexpr const char* kSchemaTag = "duelrank/v1";

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = data;  // row-major
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = j.at("rows"), cols = j.at("cols");
  const std::vector<double> data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw std::runtime_error("matrix payload size mismatch");
  Eigen::MatrixXd m(rows, cols);
  size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++];
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const std::vector<double> data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), data.size());
}

inline std::string relevance_kind_name(RelevanceKind k) {
  switch (k) {
    case RelevanceKind::kUniform: return "uniform";
    case RelevanceKind::kGeometric: return "geometric";
    case RelevanceKind::kSparse: return "sparse";
  }
  return "uniform";
}

inline RelevanceKind relevance_kind_from(const std::string& s) {
  if (s == "uniform") return RelevanceKind::kUniform;
  if (s == "geometric") return RelevanceKind::kGeometric;
  if (s == "sparse") return RelevanceKind::kSparse;
  throw std::runtime_error("unknown relevance profile: " + s);
}

}  // namespace detail

inline nlohmann::json to_json(const InstanceConfig& cfg) {
  return {{"d", cfg.d},
          {"k", cfg.k},
          {"M", cfg.M},
          {"n_contexts", cfg.n_contexts},
          {"n_actions", cfg.n_actions},
          {"B_x", cfg.B_x},
          {"B_theta", cfg.B_theta},
          {"relevance",
           {{"kind", detail::relevance_kind_name(cfg.relevance.kind)},
            {"ratio", cfg.relevance.ratio},
            {"sparsity", cfg.relevance.sparsity}}},
          {"seed", cfg.seed}};
}

inline InstanceConfig instance_config_from_json(const nlohmann::json& j) {
  InstanceConfig cfg;
  cfg.d = j.at("d");
  cfg.k = j.at("k");
  cfg.M = j.at("M");
  cfg.n_contexts = j.at("n_contexts");
  cfg.n_actions = j.at("n_actions");
  cfg.B_x = j.at("B_x");
  cfg.B_theta = j.at("B_theta");
  const auto& rel = j.at("relevance");
  cfg.relevance.kind =
      detail::relevance_kind_from(rel.at("kind").get<std::string>());
  cfg.relevance.ratio = rel.at("ratio");
  cfg.relevance.sparsity = rel.at("sparsity");
  cfg.seed = j.at("seed");
  return cfg;
}

inline nlohmann::json to_json(const MultiTaskInstance& inst) {
  nlohmann::json j;
  j["schema"] = kSchemaTag;
  j["kind"] = "instance";
  j["config"] = to_json(inst.config);
  j["phi"] = detail::matrix_to_json(inst.phi);
  j["rho"] = detail::vector_to_json(inst.rho);
  j["B_true"] = detail::matrix_to_json(inst.B_true);
  j["W_true"] = detail::matrix_to_json(inst.W_true);
  nlohmann::json thetas = nlohmann::json::array();
  for (const auto& t : inst.theta_true) thetas.push_back(detail::vector_to_json(t));
  j["theta_true"] = thetas;
  j["nu_true"] = detail::vector_to_json(inst.nu_true);
  return j;
}

inline MultiTaskInstance instance_from_json(const nlohmann::json& j) {
  if (j.at("schema") != kSchemaTag)
    throw std::runtime_error("unsupported schema tag");
  MultiTaskInstance inst;
  inst.config = instance_config_from_json(j.at("config"));
  inst.phi = detail::matrix_from_json(j.at("phi"));
  inst.rho = detail::vector_from_json(j.at("rho"));
  inst.B_true = detail::matrix_from_json(j.at("B_true"));
  inst.W_true = detail::matrix_from_json(j.at("W_true"));
  for (const auto& t : j.at("theta_true"))
    inst.theta_true.push_back(detail::vector_from_json(t));
  inst.nu_true = detail::vector_from_json(j.at("nu_true"));
  return inst;
}

inline nlohmann::json to_json(const Policy& pi) {
  nlohmann::json actions = nlohmann::json::object();
  for (size_t s = 0; s < pi.action.size(); ++s)
    actions[std::to_string(s)] = pi.action[s];
  return {{"action", actions}, {"method_tag", policy_mode_name(pi.method_tag)}};
}

inline nlohmann::json to_json(const EstimateBundle& bundle) {
  nlohmann::json j;
  j["schema"] = kSchemaTag;
  j["kind"] = "estimate_bundle";
  nlohmann::json thetas = nlohmann::json::array();
  for (const auto& t : bundle.theta_hat) thetas.push_back(detail::vector_to_json(t));
  j["theta_hat"] = thetas;
  j["basis_hat"] = detail::matrix_to_json(bundle.basis_hat);
  if (bundle.theta_hat_target)
    j["theta_hat_target"] = detail::vector_to_json(*bundle.theta_hat_target);
  j["Lambda"] = detail::matrix_to_json(bundle.Lambda);
  j["lambdas_used"] = {{"lambda_s", bundle.lambda_s},
                       {"lambda", bundle.lambda},
                       {"lambda_pre_s", bundle.lambda_pre_s},
                       {"lambda_pre", bundle.lambda_pre},
                       {"lambda_min", bundle.lambda_min}};
  return j;
}

inline nlohmann::json to_json(const RunReport& rep) {
  nlohmann::json j;
  j["schema"] = kSchemaTag;
  j["kind"] = "run_report";
  j["algo"] = rep.algo;
  j["allocation"] = rep.allocation;
  j["allocation_pre"] = rep.allocation_pre;
  j["theta_hat"] = detail::vector_to_json(rep.theta_hat);
  j["nu_hat"] = detail::vector_to_json(rep.nu_hat);
  j["nu_l1"] = rep.nu_l1;
  j["err_h"] = rep.err_h;
  j["err_2"] = rep.err_2;
  j["subopt"] = rep.subopt;
  j["c_star"] = rep.c_star;
  j["c_theta"] = rep.c_theta;
  j["fisher_c1"] = rep.fisher_c1;
  j["fisher_c2"] = rep.fisher_c2;
  j["policy"] = to_json(rep.policy);
  j["joint_objective"] = rep.joint_objective;
  j["joint_outer_iters"] = rep.joint_outer_iters;
  j["wall_ms"] = rep.wall_ms;
  j["seed"] = rep.seed;
  j["resolved_params"] = {{"lambda_s", rep.lambda_s},
                          {"lambda", rep.lambda},
                          {"lambda_pre_s", rep.lambda_pre_s},
                          {"lambda_pre", rep.lambda_pre},
                          {"beta", rep.beta_used},
                          {"R", rep.R_used},
                          {"alpha", rep.alpha},
                          {"epsilon", rep.epsilon}};
  j["bundle"] = to_json(rep.bundle);
  return j;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

}  // namespace duelrank
