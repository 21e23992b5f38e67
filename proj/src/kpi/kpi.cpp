#include "lanemerge/kpi/kpi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "lanemerge/core/wire.hpp"

namespace lanemerge::kpi {

LogStore::LogStore(const std::filesystem::path& spill)
    : spill_(std::make_unique<std::ofstream>(spill, std::ios::trunc)) {
    if (!*spill_) throw std::runtime_error("cannot open log spill " + spill.string());
}

bool LogStore::ingest(const LogRecord& record, Millis received_at) {
    std::lock_guard lock(mu_);
    try {
        validate(record);
    } catch (const InvariantError&) {
        ++drops_;
        return false;
    }
    if (spill_) {
        nlohmann::ordered_json j;
        j["received_at"] = received_at;
        j["record"] = wire::to_json(record);
        *spill_ << j.dump() << '\n';
    }
    records_.push_back({record, received_at});
    return true;
}

bool LogStore::ingest_line(std::string_view line, Millis received_at) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
    try {
        const auto env = wire::decode_envelope(line);
        if (const auto* rec = std::get_if<LogRecord>(&env.payload)) return ingest(*rec, received_at);
    } catch (const wire::WireError&) {
        try {
            return ingest(wire::log_record_from_json(nlohmann::json::parse(line)), received_at);
        } catch (const std::exception&) {
        }
    }
    std::lock_guard lock(mu_);
    ++drops_;
    return false;
}

std::size_t LogStore::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

std::uint64_t LogStore::drops() const {
    std::lock_guard lock(mu_);
    return drops_;
}

std::shared_ptr<const std::vector<StoredRecord>> LogStore::snapshot() const {
    std::lock_guard lock(mu_);
    return std::make_shared<const std::vector<StoredRecord>>(records_);
}

void LogStore::flush() {
    std::lock_guard lock(mu_);
    if (spill_) spill_->flush();
}

std::vector<StoredRecord> read_spill(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<StoredRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({wire::log_record_from_json(j.at("record")), j.at("received_at").get<Millis>()});
        } catch (const std::exception&) {
        }
    }
    return out;
}

double EcdfReport::at(double x) const {
    if (values.empty()) return 0.0;
    const auto n = static_cast<double>(values.size());
    return static_cast<double>(std::upper_bound(values.begin(), values.end(), x) - values.begin()) / n;
}

EcdfReport ecdf(std::span<const double> samples) {
    EcdfReport r;
    r.values.assign(samples.begin(), samples.end());
    std::sort(r.values.begin(), r.values.end());
    const auto n = r.values.size();
    r.fractions.resize(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && r.values[j] == r.values[i]) ++j;
        for (std::size_t k = i; k < j; ++k) r.fractions[k] = static_cast<double>(j) / static_cast<double>(n);
        i = j;
    }
    return r;
}

double percentile(std::span<const double> samples, double p) {
    if (samples.empty()) throw std::invalid_argument("percentile of an empty sample set");
    if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile rank must lie in [0, 100]");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    // The small offset keeps decimal ranks such as 99.9 of 1000 from rounding up a whole rank.
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) / 100.0 - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

std::vector<double> inter_vehicle_distances(std::span<const std::vector<Rud>> frames) {
    std::vector<double> out;
    for (const auto& frame : frames) {
        for (std::size_t i = 0; i < frame.size(); ++i) {
            for (std::size_t j = i + 1; j < frame.size(); ++j) {
                const auto& a = frame[i];
                const auto& b = frame[j];
                if (!a.lane || !b.lane || *a.lane != *b.lane) continue;
                const double d = std::hypot(a.position.x - b.position.x, a.position.y - b.position.y);
                out.push_back(d - (a.length + b.length) / 2.0);
            }
        }
    }
    return out;
}

namespace {

const std::string* attr_string(const LogRecord& r, const std::string& key) {
    const auto it = r.attributes.find(key);
    if (it == r.attributes.end()) return nullptr;
    return std::get_if<std::string>(&it->second);
}

std::optional<double> attr_number(const LogRecord& r, const std::string& key) {
    const auto it = r.attributes.find(key);
    if (it == r.attributes.end()) return std::nullopt;
    if (const auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&it->second)) return *d;
    return std::nullopt;
}

bool attr_bool(const LogRecord& r, const std::string& key) {
    const auto it = r.attributes.find(key);
    if (it == r.attributes.end()) return false;
    const auto* b = std::get_if<bool>(&it->second);
    return b != nullptr && *b;
}

}  // namespace

DeliveryIndex::DeliveryIndex(std::span<const StoredRecord> records) {
    for (const auto& s : records) {
        const auto& r = s.record;
        if (r.event == "rud_sent") {
            sent_.try_emplace(r.correlation_id, r.t);
        } else if (r.event == "rud_fused") {
            if (const auto* o = attr_string(r, "origin")) fused_origin_.try_emplace(r.correlation_id, *o);
        } else if (r.event == "reco_computed") {
            if (const auto* o = attr_string(r, "origin")) computed_origin_.try_emplace(r.correlation_id, *o);
        } else if (r.event == "reco_delivered") {
            if (delivered_.try_emplace(r.correlation_id, r.t).second) delivered_order_.push_back(r.correlation_id);
        }
    }
}

DeliveryResult DeliveryIndex::trace(const std::string& id) const {
    DeliveryResult out;
    const auto d = delivered_.find(id);
    if (d == delivered_.end()) {
        out.missing = "reco_delivered";
        return out;
    }
    const auto c = computed_origin_.find(id);
    if (c == computed_origin_.end()) {
        out.missing = "reco_computed";
        return out;
    }
    // The trigger is a fused-stream RUD; without a fusion record it is taken
    // to be the transmitted RUD itself.
    std::string origin = c->second;
    if (const auto f = fused_origin_.find(origin); f != fused_origin_.end()) origin = f->second;
    const auto s = sent_.find(origin);
    if (s == sent_.end()) {
        out.missing = "rud_sent";
        return out;
    }
    if (d->second < s->second) {
        out.missing = "causality";  // delivery stamped before the send: treated as incomplete
        return out;
    }
    out.sample = DeliverySample{id, origin, s->second, d->second};
    return out;
}

DeliveryResult delivery_time(std::span<const StoredRecord> records, const std::string& recommendation_id) {
    return DeliveryIndex(records).trace(recommendation_id);
}

KpiSummary summarize(std::span<const StoredRecord> records) {
    KpiSummary s;
    s.records = records.size();
    const DeliveryIndex index(records);
    for (const auto& id : index.delivered_ids()) {
        auto r = index.trace(id);
        if (r.sample) {
            s.deliveries.push_back(std::move(*r.sample));
        } else {
            ++s.incomplete_traces;
        }
    }
    std::map<std::pair<std::int64_t, Millis>, std::vector<Rud>> frames;
    std::vector<double> merging_all;
    for (const auto& sr : records) {
        const auto& r = sr.record;
        if (r.event == "ru_state") {
            Rud v;
            v.position = {attr_number(r, "x").value_or(0.0), attr_number(r, "y").value_or(0.0)};
            v.length = attr_number(r, "length").value_or(0.0);
            if (const auto lane = attr_number(r, "lane")) v.lane = static_cast<int>(*lane);
            const auto zone = static_cast<std::int64_t>(attr_number(r, "zone").value_or(0.0));
            frames[{zone, r.t}].push_back(v);
            const auto* role = attr_string(r, "role");
            if (role != nullptr && *role == "merging") {
                const double a = attr_number(r, "accel").value_or(0.0);
                merging_all.push_back(a);
                if (attr_bool(r, "plan")) s.accelerations.push_back(a);
            }
        } else if (r.event == "merge_resolved") {
            if (const auto* o = attr_string(r, "outcome")) ++s.merges[*o];
        } else if (r.event == "reco_computed") {
            ++s.reco_computed;
            if (attr_bool(r, "auxiliary")) ++s.reco_auxiliary;
            if (const auto us = attr_number(r, "compute_us")) s.compute_us.push_back(*us);
        } else if (r.event == "reco_rejected") {
            ++s.reco_rejected;
        } else if (r.event == "fusion_window") {
            if (const auto us = attr_number(r, "processing_us")) s.fusion_us.push_back(*us);
        }
    }
    // Runs without any plan-following vehicle (human baseline) report the replayed accelerations.
    if (s.accelerations.empty()) s.accelerations = std::move(merging_all);
    std::vector<std::vector<Rud>> frame_list;
    frame_list.reserve(frames.size());
    for (auto& [k, f] : frames) frame_list.push_back(std::move(f));
    s.distances = inter_vehicle_distances(frame_list);
    return s;
}

namespace {

nlohmann::ordered_json quantiles(const std::vector<double>& v, std::initializer_list<std::pair<const char*, double>> ps) {
    nlohmann::ordered_json j;
    j["count"] = v.size();
    if (v.empty()) return j;
    for (const auto& [name, p] : ps) j[name] = percentile(v, p);
    j["mean"] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return j;
}

// Densest window of `width` metres over the sorted samples.
std::pair<double, double> densest_band(std::vector<double> v, double width, double& share) {
    std::sort(v.begin(), v.end());
    std::size_t best = 0, best_i = 0;
    for (std::size_t i = 0, j = 0; i < v.size(); ++i) {
        while (j < v.size() && v[j] <= v[i] + width) ++j;
        if (j - i > best) {
            best = j - i;
            best_i = i;
        }
    }
    share = v.empty() ? 0.0 : static_cast<double>(best) / static_cast<double>(v.size());
    return v.empty() ? std::pair{0.0, 0.0} : std::pair{v[best_i], v[best_i] + width};
}

}  // namespace

std::string summary_json(const KpiSummary& s, const std::string& run_json) {
    nlohmann::ordered_json j;
    if (!run_json.empty()) j["run"] = nlohmann::ordered_json::parse(run_json);
    j["records"] = s.records;
    j["drops"] = s.drops;
    std::vector<double> ms;
    ms.reserve(s.deliveries.size());
    for (const auto& d : s.deliveries) ms.push_back(d.ms());
    auto delivery = quantiles(ms, {{"min", 0.0}, {"p50", 50.0}, {"p99", 99.0}, {"p99_9", 99.9}, {"max", 100.0}});
    delivery["incomplete"] = s.incomplete_traces;
    j["delivery_time_ms"] = delivery;
    auto dist = quantiles(s.distances, {{"p5", 5.0}, {"p50", 50.0}, {"p95", 95.0}});
    if (!s.distances.empty()) {
        double share = 0.0;
        const auto [lo, hi] = densest_band(s.distances, 12.0, share);
        dist["densest_12m_band"] = {lo, hi};
        dist["densest_12m_share"] = share;
    }
    j["inter_vehicle_distance_m"] = dist;
    auto acc = quantiles(s.accelerations, {{"p5", 5.0}, {"p50", 50.0}, {"p95", 95.0}});
    if (!s.accelerations.empty()) {
        const auto in_band = std::count_if(s.accelerations.begin(), s.accelerations.end(),
                                           [](double a) { return a >= 0.0 && a <= 2.0; });
        acc["share_0_to_2"] = static_cast<double>(in_band) / static_cast<double>(s.accelerations.size());
    }
    j["merging_acceleration"] = acc;
    nlohmann::ordered_json merges = nlohmann::ordered_json::object();
    std::int64_t total = 0;
    for (const auto& [k, v] : s.merges) {
        merges[k] = v;
        total += v;
    }
    merges["total"] = total;
    j["merges"] = merges;
    j["recommendations"] = {{"computed", s.reco_computed},
                            {"auxiliary", s.reco_auxiliary},
                            {"rejected_by_audit", s.reco_rejected},
                            {"delivered", s.deliveries.size() + s.incomplete_traces}};
    j["wall_clock"] = {{"orchestrator_compute_us", quantiles(s.compute_us, {{"p50", 50.0}, {"p99", 99.0}})},
                       {"fusion_window_us", quantiles(s.fusion_us, {{"p50", 50.0}, {"p99", 99.0}})}};
    return j.dump(2);
}

namespace {

void write_ecdf(const std::vector<double>& samples, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(10);
    out << "value,fraction\n";
    const auto e = ecdf(samples);
    for (std::size_t i = 0; i < e.count(); ++i) {
        if (i + 1 < e.count() && e.values[i + 1] == e.values[i]) continue;
        out << e.values[i] << ',' << e.fractions[i] << '\n';
    }
}

}  // namespace

void write_report(const KpiSummary& s, const std::string& metric, const std::filesystem::path& dir,
                  const std::string& run_json) {
    std::filesystem::create_directories(dir);
    if (metric == "all") {
        for (const char* m : kMetricNames) write_report(s, m, dir, run_json);
        return;
    }
    if (metric == "delivery_time") {
        std::ofstream out(dir / "delivery_time.csv", std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write delivery_time.csv");
        out << "recommendation_id,origin,sent_at,delivered_at,delivery_ms\n";
        for (const auto& d : s.deliveries) {
            out << d.recommendation_id << ',' << d.origin << ',' << d.sent_at << ',' << d.delivered_at << ','
                << d.ms() << '\n';
        }
    } else if (metric == "ecdf_distance") {
        write_ecdf(s.distances, dir / "ecdf_distance.csv");
    } else if (metric == "ecdf_accel") {
        write_ecdf(s.accelerations, dir / "ecdf_accel.csv");
    } else if (metric == "summary") {
        std::ofstream out(dir / "summary.json", std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write summary.json");
        out << summary_json(s, run_json) << '\n';
    } else {
        throw std::invalid_argument("unknown metric " + metric);
    }
}

}  // namespace lanemerge::kpi
