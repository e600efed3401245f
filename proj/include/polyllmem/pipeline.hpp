// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Dataset schema, ingestion, target transforms and seeded splitting.

#ifndef POLYLLMEM_PIPELINE_HPP
#define POLYLLMEM_PIPELINE_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polyllmem::pipeline {

struct PropertyInfo {
    std::string symbol;
    std::string name;
    std::string unit;
    double min = 0.0;
    double max = 0.0;
    bool log_scale = false;
    std::size_t reported_count = 0;  // data points in the reference dataset
};

class PropertyCatalog {
public:
    explicit PropertyCatalog(std::vector<PropertyInfo> properties);

    /// The 22 homopolymer properties with their units and ranges.
    static const PropertyCatalog& standard();

    [[nodiscard]] const PropertyInfo* find(std::string_view symbol) const noexcept;
    /// Throws InvalidArgument for unknown symbols.
    [[nodiscard]] const PropertyInfo& at(std::string_view symbol) const;
    [[nodiscard]] std::span<const PropertyInfo> all() const noexcept { return properties_; }

private:
    std::vector<PropertyInfo> properties_;
};

struct PolymerRecord {
    std::string id;
    std::string psmiles;
    std::map<std::string, double> values;
};

struct LoadResult {
    std::vector<PolymerRecord> records;
    std::vector<std::string> warnings;
};

/// Header must contain `psmiles`; an `id` column is optional (the PSMILES
/// string is the id otherwise). Other columns are property symbols; empty
/// cells are missing values. Malformed rows are skipped with a warning
/// naming the line; duplicate ids throw DuplicateId.
LoadResult parse_csv(std::istream& in, const PropertyCatalog& catalog);
LoadResult load_csv(const std::filesystem::path& path, const PropertyCatalog& catalog);

/// One JSON object per line: {"id", "psmiles", "values"}.
void write_jsonl(std::span<const PolymerRecord> records, std::ostream& out);
std::vector<PolymerRecord> read_jsonl(std::istream& in);
std::vector<PolymerRecord> load_jsonl(const std::filesystem::path& path);

/// log10 for log-scale properties, identity otherwise.
double transform_target(double value, const PropertyInfo& property);
double inverse_transform(double value, const PropertyInfo& property);

struct Standardizer {
    double mean = 0.0;
    double std = 1.0;  // population standard deviation

    /// Needs >= 2 values with nonzero spread; throws ZeroVariance otherwise.
    static Standardizer fit(std::span<const double> values);
    [[nodiscard]] double apply(double v) const noexcept { return (v - mean) / std; }
    [[nodiscard]] double invert(double z) const noexcept { return z * std + mean; }
};

inline constexpr std::size_t kFolds = 5;
inline constexpr double kTestFraction = 0.15;

struct SplitPlan {
    std::uint64_t seed = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::array<std::vector<std::string>, kFolds> folds;
};

/// Seeded Fisher-Yates shuffle; the first round(0.15 n) ids are the test
/// set and the rest are dealt round-robin into five folds. Needs n >= 10.
SplitPlan make_split(std::span<const std::string> ids, std::uint64_t seed);

/// Records with a value for `property`, in dataset order.
std::vector<const PolymerRecord*> records_with(std::span<const PolymerRecord> records, std::string_view property);

} // namespace polyllmem::pipeline

#endif // POLYLLMEM_PIPELINE_HPP
