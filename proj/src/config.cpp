#include "treesql/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "treesql/errors.hpp"
#include "treesql/text.hpp"

namespace treesql {

namespace pt = boost::property_tree;

namespace {

using Setter = std::function<void(AppConfig&, const std::string&)>;

template <class T>
T parse_number(const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("invalid number '" + value + "'");
  if constexpr (std::is_unsigned_v<T>) {
    if (text::trim(value).starts_with("-")) throw ConfigError("negative value '" + value + "'");
  }
  return out;
}

template <class T, class Field>
Setter number(Field field) {
  return [field](AppConfig& cfg, const std::string& v) { std::invoke(field, cfg) = parse_number<T>(v); };
}

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"search",
       {
           {"n_rollout", number<std::size_t>([](AppConfig& c) -> auto& { return c.search.n_rollout; })},
           {"n_expansion", number<std::size_t>([](AppConfig& c) -> auto& { return c.search.n_expansion; })},
           {"t_expansion", number<double>([](AppConfig& c) -> auto& { return c.search.t_expansion; })},
           {"n_reward", number<std::size_t>([](AppConfig& c) -> auto& { return c.search.n_reward; })},
           {"t_reward", number<double>([](AppConfig& c) -> auto& { return c.search.t_reward; })},
           {"n_revision", number<std::size_t>([](AppConfig& c) -> auto& { return c.search.n_revision; })},
           {"uct_c", number<double>([](AppConfig& c) -> auto& { return c.search.uct_c; })},
           {"eps_edit", number<double>([](AppConfig& c) -> auto& { return c.search.eps_edit; })},
           {"eps_semantic", number<double>([](AppConfig& c) -> auto& { return c.search.eps_semantic; })},
           {"sql_timeout_secs", number<double>([](AppConfig& c) -> auto& { return c.search.sql_timeout_secs; })},
           {"rng_seed", number<std::uint64_t>([](AppConfig& c) -> auto& { return c.search.rng_seed; })},
           {"values_per_column", number<std::size_t>([](AppConfig& c) -> auto& { return c.search.values_per_column; })},
           {"max_tokens", number<std::size_t>([](AppConfig& c) -> auto& { return c.search.max_tokens; })},
           {"retrieval_mode",
            [](AppConfig& c, const std::string& v) {
              std::string m = text::to_lower(text::trim(v));
              if (m == "and") c.search.retrieval_mode = RetrievalMode::And;
              else if (m == "or") c.search.retrieval_mode = RetrievalMode::Or;
              else throw ConfigError("retrieval_mode must be 'and' or 'or'");
            }},
       }},
      {"endpoint",
       {
           {"base_url", [](AppConfig& c, const std::string& v) { c.endpoint.base_url = text::trim(v); }},
           {"chat_model", [](AppConfig& c, const std::string& v) { c.endpoint.chat_model = text::trim(v); }},
           {"embedding_model", [](AppConfig& c, const std::string& v) { c.endpoint.embedding_model = text::trim(v); }},
           {"cache_dir", [](AppConfig& c, const std::string& v) { c.endpoint.cache_dir = text::trim(v); }},
           {"request_timeout_secs",
            number<double>([](AppConfig& c) -> auto& { return c.endpoint.request_timeout_secs; })},
       }},
      {"index",
       {
           {"num_permutations", number<std::size_t>([](AppConfig& c) -> auto& { return c.index.num_permutations; })},
           {"bands", number<std::size_t>([](AppConfig& c) -> auto& { return c.index.bands; })},
           {"rows_per_band", number<std::size_t>([](AppConfig& c) -> auto& { return c.index.rows_per_band; })},
           {"shingle_size", number<std::size_t>([](AppConfig& c) -> auto& { return c.index.shingle_size; })},
           {"seed", number<std::uint64_t>([](AppConfig& c) -> auto& { return c.index.seed; })},
           {"max_values_per_column",
            number<std::size_t>([](AppConfig& c) -> auto& { return c.index.max_values_per_column; })},
           {"max_value_length", number<std::size_t>([](AppConfig& c) -> auto& { return c.index.max_value_length; })},
       }},
  };
  return table;
}

}  // namespace

AppConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  AppConfig cfg;
  for (const auto& [section, entries] : tree) {
    auto sec = setters().find(section);
    if (sec == setters().end()) throw ConfigError("unknown config section [" + section + "]");
    if (entries.empty() && !entries.data().empty()) throw ConfigError("config key outside a section: " + section);
    for (const auto& [key, node] : entries) {
      if (key == "api_key") throw ConfigError("api_key must come from the environment, not the config file");
      auto it = sec->second.find(key);
      if (it == sec->second.end()) throw ConfigError("unknown config key " + section + "." + key);
      try {
        it->second(cfg, node.data());
      } catch (const ConfigError& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
      }
    }
  }
  try {
    cfg.search.validate();
    cfg.index.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

nlohmann::json to_json(const SearchConfig& c) {
  return nlohmann::json{{"n_rollout", c.n_rollout},
                        {"n_expansion", c.n_expansion},
                        {"t_expansion", c.t_expansion},
                        {"n_reward", c.n_reward},
                        {"t_reward", c.t_reward},
                        {"n_revision", c.n_revision},
                        {"uct_c", c.uct_c},
                        {"eps_edit", c.eps_edit},
                        {"eps_semantic", c.eps_semantic},
                        {"sql_timeout_secs", c.sql_timeout_secs},
                        {"rng_seed", c.rng_seed},
                        {"retrieval_mode", c.retrieval_mode == RetrievalMode::And ? "and" : "or"},
                        {"values_per_column", c.values_per_column},
                        {"max_tokens", c.max_tokens}};
}

nlohmann::json to_json(const MinHashParams& p) {
  return nlohmann::json{{"num_permutations", p.num_permutations},
                        {"bands", p.bands},
                        {"rows_per_band", p.rows_per_band},
                        {"shingle_size", p.shingle_size},
                        {"seed", p.seed},
                        {"max_values_per_column", p.max_values_per_column},
                        {"max_value_length", p.max_value_length}};
}

nlohmann::json to_json(const EndpointSettings& e) {
  return nlohmann::json{{"base_url", e.base_url},
                        {"chat_model", e.chat_model},
                        {"embedding_model", e.embedding_model},
                        {"request_timeout_secs", e.request_timeout_secs}};
}

}  // namespace treesql
