#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "conqur/consistency.hpp"
#include "conqur/features.hpp"
#include "conqur/mdp.hpp"

namespace conqur {

using Json = nlohmann::ordered_json;

/// {n_states, n_actions, gamma, terminal[], p0[], R[s][a], P[s][a][s']}.
/// Probabilities are decimal strings with 17 significant digits.
Json mdp_to_json(const Mdp& mdp);
Mdp mdp_from_json(const Json& j);

/// {dim, phi[s][a]} with phi entries as d-vectors.
Json features_to_json(const FeatureMap& fm);
FeatureMap features_from_json(const Json& j, int n_states, int n_actions);

/// Sorted [[s, a], ...] pair list.
Json assignment_to_json(const Assignment& sigma);

/// "%.17g" text of a double.
std::string exact_decimal(double x);

/// MDP document, with a "features" section when `fm` is given.
std::string save_instance(const Mdp& mdp, const FeatureMap* fm);

struct LoadedInstance {
    Mdp mdp;
    std::optional<FeatureMap> fm;
};

/// Parses and validates an MDP document. Throws ParseError or
/// ArgumentError (for an MDP that fails validation).
LoadedInstance load_instance(std::string_view text);

std::string read_file(const std::string& path);

/// Writes to a temporary sibling, then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

/// 1-based line of byte offset `pos` in `text`.
int line_of(std::string_view text, std::size_t pos);

}  // namespace conqur
