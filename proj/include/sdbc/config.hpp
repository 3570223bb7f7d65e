#pragma once

#include "sdbc/coefficients.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdbc {

using json = nlohmann::json;

/// A configuration that does not match the schema. `key` is the dotted path
/// of the offending entry.
class SchemaError : public std::runtime_error {
public:
    SchemaError(const std::string& key, const std::string& message)
        : std::runtime_error(key.empty() ? message : "config key '" + key + "': " + message), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// The full default configuration; its shape is the schema.
json default_config();

/// Merges `user` into `defaults`, rejecting unknown keys and type changes.
/// Coefficient entries may be a number or a term table (see scalar_field).
json merge_config(const json& defaults, const json& user);

/// Parses "a.b.c=value"; value is read as JSON when possible, else as a string.
void apply_override(json& config, const std::string& assignment);

/// Defaults ← file ← overrides ← seed. Also checks value ranges.
json resolve_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                    std::optional<std::uint64_t> seed);

void check_ranges(const json& config);

/// FNV-1a 64 of the compact dump, as 16 hex digits.
std::string config_hash(const json& config);

/// A coefficient given as a number or as a table of terms
///   {"c": c, "px": i, "py": j, "pt": k, "trig": "none"|"sin"|"cos", "kx": a, "ky": b, "w": ω}
/// each meaning c x^i y^j t^k trig(a x + b y + ω t); the field is their sum.
ScalarField scalar_field(const json& value, const std::string& key);
/// True when the table has a term depending on t.
bool field_is_time_dependent(const json& value);

}  // namespace sdbc
