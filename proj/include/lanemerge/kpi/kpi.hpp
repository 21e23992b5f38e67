#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lanemerge/core/types.hpp"

namespace lanemerge::kpi {

struct StoredRecord {
    LogRecord record;
    Millis received_at = 0;
};

/// Append-only log table, optionally mirrored to an NDJSON spill file.
/// Invalid records are counted and dropped; ingestion never throws on input.
class LogStore {
public:
    LogStore() = default;
    /// Mirrors every accepted record to `spill` (truncated on open).
    explicit LogStore(const std::filesystem::path& spill);

    /// Returns false (and counts a drop) if the record is invalid.
    bool ingest(const LogRecord& record, Millis received_at);
    /// Accepts an envelope line carrying a LogRecord, or a bare LogRecord object.
    bool ingest_line(std::string_view line, Millis received_at);

    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::uint64_t drops() const;
    /// Immutable copy of the table at this instant.
    [[nodiscard]] std::shared_ptr<const std::vector<StoredRecord>> snapshot() const;
    void flush();

private:
    mutable std::mutex mu_;
    std::vector<StoredRecord> records_;
    std::uint64_t drops_ = 0;
    std::unique_ptr<std::ofstream> spill_;
};

/// Reads a spill file written by LogStore. Malformed lines are skipped.
std::vector<StoredRecord> read_spill(const std::filesystem::path& path);

// Statistics ----------------------------------------------------------------

struct EcdfReport {
    std::vector<double> values;     // sorted samples
    std::vector<double> fractions;  // fractions[i] = #(samples <= values[i]) / n
    [[nodiscard]] std::size_t count() const { return values.size(); }
    /// F(x) = #(samples <= x) / n; 0 for an empty report.
    [[nodiscard]] double at(double x) const;
};

EcdfReport ecdf(std::span<const double> samples);

/// Nearest-rank percentile: sorted[ceil(p n / 100)] (1-based) with the rank clamped to
/// [1, n]. Throws std::invalid_argument on empty input or p outside [0, 100].
double percentile(std::span<const double> samples, double p);

/// Same-lane pairs per frame: centre distance minus half of both lengths.
std::vector<double> inter_vehicle_distances(std::span<const std::vector<Rud>> frames);

// Delivery-time tracing -------------------------------------------------------

struct DeliverySample {
    std::string recommendation_id;
    std::string origin;          // key of the first-sent RUD
    Millis sent_at = 0;
    Millis delivered_at = 0;
    [[nodiscard]] double ms() const { return static_cast<double>(delivered_at - sent_at); }
};

struct DeliveryResult {
    std::optional<DeliverySample> sample;  // nullopt marks an incomplete trace
    std::string missing;                   // which link of the chain is absent
};

/// Joins reco_delivered -> reco_computed(origin) -> rud_fused(origin) -> rud_sent.
class DeliveryIndex {
public:
    explicit DeliveryIndex(std::span<const StoredRecord> records);
    [[nodiscard]] DeliveryResult trace(const std::string& recommendation_id) const;
    /// Every delivered recommendation, complete or not, in log order.
    [[nodiscard]] const std::vector<std::string>& delivered_ids() const { return delivered_order_; }

private:
    std::unordered_map<std::string, Millis> sent_, delivered_;
    std::unordered_map<std::string, std::string> computed_origin_, fused_origin_;
    std::vector<std::string> delivered_order_;
};

DeliveryResult delivery_time(std::span<const StoredRecord> records, const std::string& recommendation_id);

// Reports ---------------------------------------------------------------------

struct KpiSummary {
    std::size_t records = 0;
    std::uint64_t drops = 0;
    std::vector<DeliverySample> deliveries;
    std::size_t incomplete_traces = 0;
    std::vector<double> distances;
    std::vector<double> accelerations;   // merging vehicles while following a plan (or replaying, in baseline runs)
    std::map<std::string, std::int64_t> merges;  // outcome -> count
    std::int64_t reco_computed = 0;
    std::int64_t reco_rejected = 0;
    std::int64_t reco_auxiliary = 0;
    std::vector<double> compute_us;       // wall clock
    std::vector<double> fusion_us;        // wall clock
};

KpiSummary summarize(std::span<const StoredRecord> records);

/// JSON text of the summary. Every wall-clock derived value sits under the
/// "wall_clock" key so run-to-run comparisons can drop it.
/// `run_json`, if non-empty, must be a JSON object; it is embedded under "run".
std::string summary_json(const KpiSummary& s, const std::string& run_json = {});

inline constexpr const char* kMetricNames[] = {"delivery_time", "ecdf_distance", "ecdf_accel", "summary"};

/// Writes `<metric>.csv` (or summary.json) into `dir`; metric "all" writes
/// every report. Throws std::invalid_argument for an unknown metric.
void write_report(const KpiSummary& s, const std::string& metric, const std::filesystem::path& dir,
                  const std::string& run_json = {});

}  // namespace lanemerge::kpi
