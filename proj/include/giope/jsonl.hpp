#pragma once
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "giope/data.hpp"
#include "giope/errors.hpp"

namespace giope {

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* name,
                                           std::size_t line) {
    auto it = obj.find(name);
    if (it == obj.end())
        throw SchemaError("line " + std::to_string(line) + ": missing field '" +
                          std::string(name) + "'");
    return *it;
}

inline std::vector<double> number_array(const nlohmann::json& v, const char* name,
                                        std::size_t line) {
    if (!v.is_array())
        throw SchemaError("line " + std::to_string(line) + ": field '" + std::string(name) +
                          "' must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_number())
            throw SchemaError("line " + std::to_string(line) + ": field '" +
                              std::string(name) + "' must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

} // namespace detail

/// One JSON object per line:
///   {"id": "...", "x0": [...], "actions": [...], "rewards": [...],
///    "b_probs": [...], "e_probs": [...]}
/// The four step arrays must have equal length; x0 length must be constant
/// across the file.
inline std::vector<Trajectory> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");

    std::vector<Trajectory> out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t m = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!obj.is_object())
            throw SchemaError("line " + std::to_string(lineno) + ": expected a JSON object");

        Trajectory traj;
        const auto& id = detail::require_field(obj, "id", lineno);
        if (!id.is_string())
            throw SchemaError("line " + std::to_string(lineno) + ": field 'id' must be a string");
        traj.id = id.get<std::string>();

        traj.x0 = detail::number_array(detail::require_field(obj, "x0", lineno), "x0", lineno);
        const auto& actions = detail::require_field(obj, "actions", lineno);
        if (!actions.is_array())
            throw SchemaError("line " + std::to_string(lineno) +
                              ": field 'actions' must be an array of integers");
        for (const auto& a : actions) {
            if (!a.is_number_integer())
                throw SchemaError("line " + std::to_string(lineno) +
                                  ": field 'actions' must be an array of integers");
            traj.actions.push_back(a.get<int>());
        }
        traj.rewards = detail::number_array(detail::require_field(obj, "rewards", lineno),
                                            "rewards", lineno);
        traj.b_probs = detail::number_array(detail::require_field(obj, "b_probs", lineno),
                                            "b_probs", lineno);
        traj.e_probs = detail::number_array(detail::require_field(obj, "e_probs", lineno),
                                            "e_probs", lineno);

        const std::size_t steps = traj.actions.size();
        if (traj.rewards.size() != steps || traj.b_probs.size() != steps ||
            traj.e_probs.size() != steps)
            throw SchemaError("line " + std::to_string(lineno) +
                              ": actions/rewards/b_probs/e_probs lengths differ");

        if (out.empty()) {
            m = traj.x0.size();
        } else if (traj.x0.size() != m) {
            throw SchemaError("line " + std::to_string(lineno) + ": field 'x0' has length " +
                              std::to_string(traj.x0.size()) + ", expected " +
                              std::to_string(m));
        }
        out.push_back(std::move(traj));
    }
    return out;
}

inline void save_jsonl(const std::string& path, std::span<const Trajectory> trajs) {
    std::ofstream outf(path);
    if (!outf) throw ParseError("cannot open '" + path + "' for writing");
    for (const auto& traj : trajs) {
        nlohmann::json obj;
        obj["id"] = traj.id;
        obj["x0"] = traj.x0;
        obj["actions"] = traj.actions;
        obj["rewards"] = traj.rewards;
        obj["b_probs"] = traj.b_probs;
        obj["e_probs"] = traj.e_probs;
        outf << obj.dump() << "\n";
    }
}

} // namespace giope
