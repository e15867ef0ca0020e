#pragma once

// Output artifacts: CSV logs, heatmap images and the run manifest.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/sha.h>

#include "reflectsim/harness/config.hpp"
#include "reflectsim/marl.hpp"
#include "reflectsim/propagation.hpp"

namespace reflectsim::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr int kTrainingCsvVersion = 1;
inline constexpr int kEvalCsvVersion = 1;
inline constexpr int kSummaryCsvVersion = 1;
inline constexpr int kHeatmapCsvVersion = 1;
inline constexpr const char* kToolVersion = "0.3.0";

inline constexpr double kRampLowDbm = -110.0;
inline constexpr double kRampHighDbm = -60.0;

inline std::string num(double v) { return detail::fmt(v); }

inline std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
    return os;
}

inline void write_text(const fs::path& p, const std::string& text) {
    auto os = open_out(p);
    os << text;
    if (!os) throw std::runtime_error("write failed for '" + p.string() + "'");
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- CSV ------------------------------------------------------------------

inline constexpr const char* kTrainingHeader = "episode,agent_id,mean_cumulative_reward,actor_loss,critic_loss";

/// Streams one row per (episode, agent) so a crash leaves the rows so far.
class TrainingCsv {
public:
    explicit TrainingCsv(const fs::path& p) : os_(open_out(p)) { os_ << kTrainingHeader << '\n' << std::flush; }

    void append(const EpisodeLog& e) {
        for (std::size_t a = 0; a < e.cumulative_reward.size(); ++a)
            os_ << e.episode << ',' << a << ',' << num(e.cumulative_reward[a]) << ',' << num(e.actor_loss[a]) << ','
                << num(e.critic_loss) << '\n';
        os_.flush();
    }

private:
    std::ofstream os_;
};

inline std::string eval_csv(const EvalLog& log) {
    std::ostringstream o;
    const std::size_t K = log.user_rssi.empty() ? 0 : log.user_rssi.front().size();
    o << "step";
    for (std::size_t k = 0; k < K; ++k) o << ",user_" << k << "_rssi_dbm";
    o << ",mean_rssi_dbm\n";
    for (std::size_t t = 0; t < log.mean_rssi.size(); ++t) {
        o << t;
        for (double v : log.user_rssi[t]) o << ',' << num(v);
        o << ',' << num(log.mean_rssi[t]) << '\n';
    }
    return o.str();
}

struct SummaryRow {
    std::string algo;
    std::uint64_t seed = 0;
    bool failed = false;
    double mean_rssi_dbm = 0.0;
    double std_rssi_dbm = 0.0;
    double final_reward = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

inline std::string summary_csv(std::vector<SummaryRow> rows) {
    std::sort(rows.begin(), rows.end(),
              [](const SummaryRow& a, const SummaryRow& b) { return std::tie(a.algo, a.seed) < std::tie(b.algo, b.seed); });
    std::ostringstream o;
    o << "algo,seed,mean_rssi_dbm,std_rssi_dbm,final_reward\n";
    for (const auto& r : rows) {
        o << r.algo << ',' << r.seed << ',';
        if (r.failed)
            o << "failed,failed,failed\n";
        else
            o << num(r.mean_rssi_dbm) << ',' << num(r.std_rssi_dbm) << ',' << num(r.final_reward) << '\n';
    }
    return o.str();
}

// ---- heatmap image --------------------------------------------------------

/// Linear ramp from grey at kRampLowDbm to orange-red at kRampHighDbm;
/// values outside the range saturate.
inline std::array<unsigned char, 3> ramp_color(double dbm) {
    const double t = std::clamp((dbm - kRampLowDbm) / (kRampHighDbm - kRampLowDbm), 0.0, 1.0);
    constexpr std::array<double, 3> lo{64.0, 64.0, 64.0};
    constexpr std::array<double, 3> hi{255.0, 96.0, 0.0};
    std::array<unsigned char, 3> c{};
    for (int i = 0; i < 3; ++i) c[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(lo[i] + t * (hi[i] - lo[i])));
    return c;
}

/// Binary P6 image, nx wide and ny tall; the top row is the largest y.
inline std::string heatmap_ppm(const Heatmap& h) {
    std::string out = "P6\n" + std::to_string(h.spec.nx) + ' ' + std::to_string(h.spec.ny) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(h.spec.nx) * h.spec.ny * 3);
    for (int j = h.spec.ny - 1; j >= 0; --j)
        for (int i = 0; i < h.spec.nx; ++i) {
            const auto c = ramp_color(h.at(i, j));
            out.append(reinterpret_cast<const char*>(c.data()), 3);
        }
    return out;
}

inline std::string heatmap_csv(const Heatmap& h) {
    std::ostringstream o;
    o << "x,y,rssi_dbm\n";
    for (int j = 0; j < h.spec.ny; ++j)
        for (int i = 0; i < h.spec.nx; ++i) o << num(h.x_at(i)) << ',' << num(h.y_at(j)) << ',' << num(h.at(i, j)) << '\n';
    return o.str();
}

inline json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

// ---- hashing and manifest -------------------------------------------------

inline std::string hex(const unsigned char* d, std::size_t n) {
    std::ostringstream o;
    for (std::size_t i = 0; i < n; ++i) o << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(d[i]);
    return o.str();
}

/// Same digest git assigns to a blob with this content.
inline std::string git_blob_sha1(const std::string& content) {
    const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char md[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), md);
    return hex(md, SHA_DIGEST_LENGTH);
}

/// Writes `text` to a sibling temporary then renames it into place.
inline void write_atomic(const fs::path& p, const std::string& text) {
    fs::path tmp = p;
    tmp += ".tmp";
    write_text(tmp, text);
    fs::rename(tmp, p);
}

inline std::vector<std::string> list_outputs(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir).generic_string();
        if (rel == "manifest.json" || rel.ends_with(".tmp")) continue;
        out.push_back(rel);
    }
    std::sort(out.begin(), out.end());
    return out;
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Manifest for `dir`. Per-command results accumulate under "runs" so
/// repeated invocations into one directory keep earlier entries.
inline void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_text,
                           const json& results, double wall_seconds) {
    json m;
    const fs::path path = dir / "manifest.json";
    if (fs::exists(path)) {
        try {
            m = json::parse(read_text(path));
        } catch (const json::exception&) {
            m = json::object();
        }
    }
    m["tool"] = "reflectsim";
    m["tool_version"] = kToolVersion;
    m["schemas"] = {{"training_csv", kTrainingCsvVersion},
                    {"eval_csv", kEvalCsvVersion},
                    {"summary_csv", kSummaryCsvVersion},
                    {"heatmap_csv", kHeatmapCsvVersion},
                    {"checkpoint", kCheckpointMagic}};
    m["config_snapshot"] = "config.ini";
    m["config_sha1"] = git_blob_sha1(config_text);
    json run = {{"command", command}, {"wall_seconds", wall_seconds}, {"results", results}};
    if (!m.contains("runs")) m["runs"] = json::array();
    m["runs"].push_back(run);
    const auto files = list_outputs(dir);
    json listed = json::array();
    for (const auto& f : files)
        listed.push_back({{"path", f}, {"sha1", git_blob_sha1(read_text(dir / f))}});
    m["files"] = listed;
    write_atomic(path, m.dump(2) + "\n");
}

}  // namespace reflectsim::harness
