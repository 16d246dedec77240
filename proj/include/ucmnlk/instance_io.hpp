#pragma once

#include "ucmnlk/hard_instances.hpp"
#include "ucmnlk/mnl_mdp.hpp"

#include <json.hpp>

#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

namespace ucmnlk {

using Json = nlohmann::json;

using HardParams = std::variant<InfiniteHardParams, FiniteHardParams>;

/// A parsed instance file: the MDP plus, for built-in families, their parameters.
struct LoadedInstance {
    MnlMdp mdp;
    std::optional<HardParams> hard;
};

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline Json vector_to_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json hard_params_to_json(const InfiniteHardParams& p) {
    return Json{{"family", "infinite"},
                {"d", p.d},
                {"mode", p.mode == HardMode::average ? "average" : "discounted"},
                {"mode_value", p.mode_value},
                {"T", p.horizon},
                {"delta", p.delta},
                {"Delta", p.gap},
                {"signs", p.signs}};
}

inline Json hard_params_to_json(const FiniteHardParams& p) {
    return Json{{"family", "finite"}, {"d", p.d}, {"H", p.horizon_h}, {"K", p.episodes},
                {"signs", p.signs}};
}

inline Json hard_params_to_json(const HardParams& p) {
    return std::visit([](const auto& x) { return hard_params_to_json(x); }, p);
}

inline Json instance_to_json(const MnlMdp& m, const std::optional<HardParams>& hard = std::nullopt) {
    Json j;
    j["num_states"] = m.num_states;
    j["num_actions"] = m.num_actions;
    j["dim"] = m.dim;
    Json rewards = Json::array(), reachable = Json::array(), features = Json::array();
    for (std::size_t s = 0; s < m.num_states; ++s) {
        Json rr = Json::array(), rs = Json::array(), fs = Json::array();
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            const std::size_t pair = m.pair_index(s, a);
            rr.push_back(m.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)));
            rs.push_back(m.reachable[pair]);
            Json fa = Json::array();
            const Matrix& f = m.features[pair];
            for (Eigen::Index k = 0; k < f.rows(); ++k) fa.push_back(vector_to_json(f.row(k).transpose()));
            fs.push_back(std::move(fa));
        }
        rewards.push_back(std::move(rr));
        reachable.push_back(std::move(rs));
        features.push_back(std::move(fs));
    }
    j["rewards"] = std::move(rewards);
    j["reachable"] = std::move(reachable);
    j["features"] = std::move(features);
    j["theta_star"] = vector_to_json(m.theta_star);
    j["l_phi"] = m.l_phi;
    j["l_theta"] = m.l_theta;
    if (hard) j["hard_instance"] = hard_params_to_json(*hard);
    return j;
}

inline void save_instance(const std::string& path, const MnlMdp& m,
                          const std::optional<HardParams>& hard = std::nullopt) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    out << instance_to_json(m, hard).dump(1) << '\n';
    if (!out) throw ConfigError("failed writing " + path);
}

inline Json validation_report_to_json(const ValidationReport& r) {
    Json checks = Json::array();
    for (const auto& c : r.checks) {
        Json margin = std::isfinite(c.worst_margin) ? Json(c.worst_margin) : Json(nullptr);
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"worst_margin", margin}});
    }
    return Json{{"family", r.family}, {"passed", r.passed()}, {"checks", std::move(checks)}};
}

// ---------------------------------------------------------------------------
// Source locations
// ---------------------------------------------------------------------------

struct SourcePos {
    std::size_t line = 1;
    std::size_t column = 1;
};

inline SourcePos position_of(const std::string& text, std::size_t offset) {
    SourcePos p;
    offset = std::min(offset, text.size());
    for (std::size_t i = 0; i < offset; ++i) {
        if (text[i] == '\n') {
            ++p.line;
            p.column = 1;
        } else {
            ++p.column;
        }
    }
    return p;
}

namespace detail {

// Input iterator that counts consumed characters for the SAX locator.
struct CountingIterator {
    using iterator_category = std::input_iterator_tag;
    using value_type = char;
    using difference_type = std::ptrdiff_t;
    using pointer = const char*;
    using reference = const char&;

    const char* p = nullptr;
    std::size_t* consumed = nullptr;

    reference operator*() const { return *p; }
    CountingIterator& operator++() {
        ++p;
        ++*consumed;
        return *this;
    }
    CountingIterator operator++(int) {
        CountingIterator old = *this;
        ++*this;
        return old;
    }
    bool operator==(const CountingIterator& o) const { return p == o.p; }
    bool operator!=(const CountingIterator& o) const { return p != o.p; }
};

// Records the character offset at which each JSON pointer's value starts.
class PointerLocator : public nlohmann::json_sax<Json> {
  public:
    explicit PointerLocator(const std::size_t* consumed) : consumed_(consumed) {}

    std::map<std::string, std::size_t> offsets;

    bool null() override { return value(); }
    bool boolean(bool) override { return value(); }
    bool number_integer(number_integer_t) override { return value(); }
    bool number_unsigned(number_unsigned_t) override { return value(); }
    bool number_float(number_float_t, const string_t&) override { return value(); }
    bool string(string_t&) override { return value(); }
    bool binary(binary_t&) override { return value(); }
    bool start_object(std::size_t) override {
        value();
        stack_.push_back({true, -1, {}});
        return true;
    }
    bool key(string_t& k) override {
        stack_.back().key = k;
        return true;
    }
    bool end_object() override {
        stack_.pop_back();
        return true;
    }
    bool start_array(std::size_t) override {
        value();
        stack_.push_back({false, -1, {}});
        return true;
    }
    bool end_array() override {
        stack_.pop_back();
        return true;
    }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override {
        return false;
    }

  private:
    struct Frame {
        bool object;
        long index;
        std::string key;
    };

    bool value() {
        if (!stack_.empty() && !stack_.back().object) ++stack_.back().index;
        std::string path;
        for (const auto& f : stack_)
            path += "/" + (f.object ? f.key : std::to_string(f.index));
        // the lexer has consumed the first character of the token
        const std::size_t at = *consumed_ > 0 ? *consumed_ - 1 : 0;
        offsets.emplace(path, at);
        return true;
    }

    const std::size_t* consumed_;
    std::vector<Frame> stack_;
};

} // namespace detail

/// Offsets of every value in a JSON document, keyed by JSON pointer.
inline std::map<std::string, std::size_t> locate_pointers(const std::string& text) {
    std::size_t consumed = 0;
    detail::PointerLocator loc(&consumed);
    detail::CountingIterator first{text.data(), &consumed};
    detail::CountingIterator last{text.data() + text.size(), &consumed};
    Json::sax_parse(first, last, &loc);
    return std::move(loc.offsets);
}

/// Line of the deepest existing prefix of `pointer`.
inline SourcePos locate(const std::string& text, const std::map<std::string, std::size_t>& offsets,
                        std::string pointer) {
    while (true) {
        auto it = offsets.find(pointer);
        if (it != offsets.end()) return position_of(text, it->second);
        const auto slash = pointer.find_last_of('/');
        if (slash == std::string::npos || pointer.empty()) return {};
        pointer.resize(slash);
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

struct PathError {
    std::string path;
    std::string message;
};

inline const Json& require(const Json& j, const std::string& parent, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw PathError{parent, std::string("missing field \"") + key + "\""};
    return j.at(key);
}

inline double as_real(const Json& j, const std::string& path) {
    if (!j.is_number()) throw PathError{path, "expected a number"};
    return j.get<double>();
}

inline std::size_t as_count(const Json& j, const std::string& path) {
    if (!j.is_number_unsigned()) throw PathError{path, "expected a non-negative integer"};
    return j.get<std::size_t>();
}

inline const Json& as_array(const Json& j, const std::string& path, std::size_t n) {
    if (!j.is_array()) throw PathError{path, "expected an array"};
    if (n != static_cast<std::size_t>(-1) && j.size() != n)
        throw PathError{path, "expected " + std::to_string(n) + " entries, found " + std::to_string(j.size())};
    return j;
}

inline Vector as_vector(const Json& j, const std::string& path, std::size_t n) {
    as_array(j, path, n);
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = as_real(j[i], path + "/" + std::to_string(i));
    return v;
}

inline constexpr std::size_t kAnySize = static_cast<std::size_t>(-1);

inline std::vector<int> as_signs(const Json& j, const std::string& path) {
    as_array(j, path, kAnySize);
    std::vector<int> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number_integer()) throw PathError{path + "/" + std::to_string(i), "expected +1 or -1"};
        out.push_back(j[i].get<int>());
    }
    return out;
}

inline HardParams parse_hard(const Json& j) {
    const std::string base = "/hard_instance";
    const Json& fam = require(j, base, "family");
    if (fam == "infinite") {
        const std::size_t d = as_count(require(j, base, "d"), base + "/d");
        auto p = InfiniteHardParams::from_gap(d, as_real(require(j, base, "delta"), base + "/delta"),
                                              as_real(require(j, base, "Delta"), base + "/Delta"),
                                              as_signs(require(j, base, "signs"), base + "/signs"));
        const Json& mode = require(j, base, "mode");
        if (mode != "average" && mode != "discounted")
            throw PathError{base + "/mode", "expected \"average\" or \"discounted\""};
        p.mode = mode == "average" ? HardMode::average : HardMode::discounted;
        p.mode_value = as_real(require(j, base, "mode_value"), base + "/mode_value");
        p.horizon = as_count(require(j, base, "T"), base + "/T");
        return p;
    }
    if (fam == "finite") {
        std::vector<std::vector<int>> signs;
        const Json& js = as_array(require(j, base, "signs"), base + "/signs", kAnySize);
        for (std::size_t h = 0; h < js.size(); ++h)
            signs.push_back(as_signs(js[h], base + "/signs/" + std::to_string(h)));
        return FiniteHardParams::make(as_count(require(j, base, "d"), base + "/d"),
                                      as_count(require(j, base, "H"), base + "/H"),
                                      as_count(require(j, base, "K"), base + "/K"), std::move(signs));
    }
    throw PathError{base + "/family", "expected \"infinite\" or \"finite\""};
}

inline LoadedInstance parse_instance_json(const Json& j) {
    if (!j.is_object()) throw PathError{"", "instance file must hold a JSON object"};
    LoadedInstance out;
    MnlMdp& m = out.mdp;
    m.num_states = as_count(require(j, "", "num_states"), "/num_states");
    m.num_actions = as_count(require(j, "", "num_actions"), "/num_actions");
    m.dim = as_count(require(j, "", "dim"), "/dim");
    if (m.num_states == 0) throw PathError{"/num_states", "must be positive"};
    if (m.num_actions == 0) throw PathError{"/num_actions", "must be positive"};
    if (m.dim == 0) throw PathError{"/dim", "must be positive"};
    const Json& rewards = as_array(require(j, "", "rewards"), "/rewards", m.num_states);
    const Json& reachable = as_array(require(j, "", "reachable"), "/reachable", m.num_states);
    const Json& features = as_array(require(j, "", "features"), "/features", m.num_states);
    m.rewards.resize(static_cast<Eigen::Index>(m.num_states), static_cast<Eigen::Index>(m.num_actions));
    for (std::size_t s = 0; s < m.num_states; ++s) {
        const std::string ss = "/" + std::to_string(s);
        const Vector r = as_vector(rewards[s], "/rewards" + ss, m.num_actions);
        m.rewards.row(static_cast<Eigen::Index>(s)) = r.transpose();
        as_array(reachable[s], "/reachable" + ss, m.num_actions);
        as_array(features[s], "/features" + ss, m.num_actions);
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            const std::string sa = ss + "/" + std::to_string(a);
            const Json& jr = as_array(reachable[s][a], "/reachable" + sa, kAnySize);
            std::vector<StateId> reach;
            for (std::size_t k = 0; k < jr.size(); ++k)
                reach.push_back(as_count(jr[k], "/reachable" + sa + "/" + std::to_string(k)));
            const Json& jf = as_array(features[s][a], "/features" + sa, reach.size());
            Matrix f(static_cast<Eigen::Index>(reach.size()), static_cast<Eigen::Index>(m.dim));
            for (std::size_t k = 0; k < reach.size(); ++k)
                f.row(static_cast<Eigen::Index>(k)) =
                    as_vector(jf[k], "/features" + sa + "/" + std::to_string(k), m.dim).transpose();
            m.reachable.push_back(std::move(reach));
            m.features.push_back(std::move(f));
        }
    }
    m.theta_star = as_vector(require(j, "", "theta_star"), "/theta_star", m.dim);
    m.l_phi = as_real(require(j, "", "l_phi"), "/l_phi");
    m.l_theta = as_real(require(j, "", "l_theta"), "/l_theta");
    if (j.contains("hard_instance")) out.hard = parse_hard(j.at("hard_instance"));
    return out;
}

inline std::string format_at(const std::string& source, SourcePos p, const std::string& path,
                             const std::string& msg) {
    return source + ":" + std::to_string(p.line) + ":" + std::to_string(p.column) + ": " +
           (path.empty() ? std::string("/") : path) + ": " + msg;
}

} // namespace detail

/**
 * Parses and validates an instance document. Every failure is reported as a
 * ConfigError whose lines read "source:line:col: /json/pointer: message".
 * Instances must already satisfy the zero-feature condition.
 */
inline LoadedInstance parse_instance(const std::string& text, const std::string& source = "<input>") {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        const SourcePos p = position_of(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ConfigError(source + ":" + std::to_string(p.line) + ":" + std::to_string(p.column) +
                          ": JSON syntax error: " + e.what());
    }
    LoadedInstance out;
    try {
        out = detail::parse_instance_json(j);
    } catch (const detail::PathError& e) {
        const auto offsets = locate_pointers(text);
        throw ConfigError(detail::format_at(source, locate(text, offsets, e.path), e.path, e.message));
    } catch (const ConfigError& e) {
        const auto offsets = locate_pointers(text);
        throw ConfigError(detail::format_at(source, locate(text, offsets, "/hard_instance"),
                                            "/hard_instance", e.what()));
    }
    const auto problems = check_invariants(out.mdp);
    if (!problems.empty()) {
        const auto offsets = locate_pointers(text);
        std::string msg = "invalid instance " + source + ":";
        for (const auto& p : problems)
            msg += "\n" + detail::format_at(source, locate(text, offsets, p.path), p.path, p.message);
        throw ConfigError(msg);
    }
    return out;
}

inline LoadedInstance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open instance file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_instance(ss.str(), path);
}

} // namespace ucmnlk
