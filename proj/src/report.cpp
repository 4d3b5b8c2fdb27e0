#include "rvjscc/report.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace rvjscc {

namespace fs = std::filesystem;

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics file: " + path);
    const auto& cols = metrics_csv_columns();
    for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    for (const auto& r : records) {
        out << fmt::format("{},{},{},{},{},{},{}\n", r.config_tag, r.snr_db, r.psnr_db, r.ms_ssim, r.loss, r.latent_mse,
                           r.epoch);
    }
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics file: " + path);
    std::string line;
    std::getline(in, line);
    std::vector<MetricsRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != metrics_csv_columns().size()) {
            throw std::runtime_error(fmt::format("{}:{}: expected {} columns", path, line_no, metrics_csv_columns().size()));
        }
        MetricsRecord r;
        r.config_tag = cells[0];
        r.snr_db = std::stod(cells[1]);
        r.psnr_db = std::stod(cells[2]);
        r.ms_ssim = std::stod(cells[3]);
        r.loss = std::stod(cells[4]);
        r.latent_mse = std::stod(cells[5]);
        r.epoch = std::stoi(cells[6]);
        records.push_back(r);
    }
    return records;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write history file: " + path);
    out << "epoch,lr,train_loss,val_loss,val_frame_mse,val_latent_mse,val_psnr_db,improved\n";
    for (const auto& e : history) {
        out << fmt::format("{},{},{},{},{},{},{},{}\n", e.epoch, e.lr, e.train_loss, e.val_loss, e.val_frame_mse,
                           e.val_latent_mse, e.val_psnr_db, e.improved ? 1 : 0);
    }
}

std::vector<EpochRecord> read_history_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open history file: " + path);
    std::string line;
    std::getline(in, line);
    std::vector<EpochRecord> history;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw std::runtime_error(fmt::format("{}:{}: expected 8 columns", path, line_no));
        EpochRecord e;
        e.epoch = std::stoi(cells[0]);
        e.lr = std::stod(cells[1]);
        e.train_loss = std::stod(cells[2]);
        e.val_loss = std::stod(cells[3]);
        e.val_frame_mse = std::stod(cells[4]);
        e.val_latent_mse = std::stod(cells[5]);
        e.val_psnr_db = std::stod(cells[6]);
        e.improved = cells[7] == "1";
        history.push_back(e);
    }
    return history;
}

namespace {

double metric_value(const MetricsRecord& r, const std::string& metric) {
    if (metric == "psnr_db") return r.psnr_db;
    if (metric == "ms_ssim") return r.ms_ssim;
    if (metric == "loss") return r.loss;
    if (metric == "latent_mse") return r.latent_mse;
    throw std::invalid_argument("unknown metric: " + metric);
}

std::vector<std::string> tags_in_order(const std::vector<MetricsRecord>& records) {
    std::vector<std::string> tags;
    for (const auto& r : records) {
        if (std::find(tags.begin(), tags.end(), r.config_tag) == tags.end()) tags.push_back(r.config_tag);
    }
    return tags;
}

std::string svg_plot(const std::vector<MetricsRecord>& records, const std::string& metric, const std::string& label) {
    constexpr double width = 640, height = 420;
    constexpr double left = 70, right = 170, top = 40, bottom = 55;
    static const std::array<const char*, 8> colors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = x_lo, y_hi = -x_lo;
    for (const auto& r : records) {
        x_lo = std::min(x_lo, r.snr_db);
        x_hi = std::max(x_hi, r.snr_db);
        y_lo = std::min(y_lo, metric_value(r, metric));
        y_hi = std::max(y_hi, metric_value(r, metric));
    }
    if (x_hi <= x_lo) { x_lo -= 1; x_hi += 1; }
    const double pad = y_hi > y_lo ? 0.08 * (y_hi - y_lo) : std::max(1e-3, 0.05 * std::abs(y_hi));
    y_lo -= pad;
    y_hi += pad;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        width, height);
    svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{} vs SNR</text>\n",
                       left + pw / 2, label);
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left,
                       top, pw, ph);
    for (int i = 0; i <= 4; ++i) {
        const double xv = x_lo + (x_hi - x_lo) * i / 4.0;
        const double yv = y_lo + (y_hi - y_lo) * i / 4.0;
        svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#ddd\"/>\n", px(xv), top, top + ph);
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n", px(xv), top + ph + 16, xv);
        svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#ddd\"/>\n", left, py(yv), left + pw);
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.4g}</text>\n", left - 6, py(yv) + 4, yv);
    }
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">SNR (dB)</text>\n", left + pw / 2, height - 12);
    svg += fmt::format("<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                       top + ph / 2, label);

    const auto tags = tags_in_order(records);
    for (size_t t = 0; t < tags.size(); ++t) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : records) {
            if (r.config_tag == tags[t]) pts.emplace_back(r.snr_db, metric_value(r, metric));
        }
        std::sort(pts.begin(), pts.end());
        const char* color = colors[t % colors.size()];
        std::string poly;
        for (const auto& [x, y] : pts) poly += fmt::format("{:.2f},{:.2f} ", px(x), py(y));
        svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", poly, color);
        for (const auto& [x, y] : pts) {
            svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(x), py(y), color);
        }
        const double ly = top + 14 + 18.0 * static_cast<double>(t);
        svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                           left + pw + 12, ly, left + pw + 32, color);
        svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", left + pw + 38, ly + 4, tags[t]);
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace

std::vector<std::string> write_metric_plots(const std::string& dir, const std::vector<MetricsRecord>& records) {
    if (records.empty()) return {};
    fs::create_directories(dir);
    static const std::vector<std::pair<std::string, std::string>> metrics{
        {"psnr_db", "PSNR (dB)"}, {"ms_ssim", "MS-SSIM"}, {"loss", "loss"}, {"latent_mse", "latent MSE"}};
    std::vector<std::string> paths;
    for (const auto& [metric, label] : metrics) {
        const auto path = (fs::path(dir) / (metric + ".svg")).string();
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write plot: " + path);
        out << svg_plot(records, metric, label);
        paths.push_back(path);
    }
    return paths;
}

std::map<std::string, double> mean_by_tag(const std::vector<MetricsRecord>& records, const std::string& metric) {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& r : records) {
        auto& [sum, n] = acc[r.config_tag];
        sum += metric_value(r, metric);
        ++n;
    }
    std::map<std::string, double> means;
    for (const auto& [tag, sn] : acc) means[tag] = sn.first / sn.second;
    return means;
}

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
    return out;
}

}  // namespace

MissingCheckpoints::MissingCheckpoints(std::vector<std::string> tags)
    : std::runtime_error("missing checkpoint for config(s): " + join(tags)), tags_(std::move(tags)) {}

std::string checkpoint_path_for(const std::string& checkpoint_dir, const std::string& tag) {
    return (fs::path(checkpoint_dir) / tag / "checkpoint.pt").string();
}

std::vector<MetricsRecord> run_ablation(const std::map<std::string, std::string>& checkpoints,
                                        const std::vector<std::string>& tags,
                                        const std::vector<VideoSequence>& sequences,
                                        const std::vector<double>& snrs_db, uint64_t seed) {
    std::vector<std::string> missing;
    for (const auto& tag : tags) {
        auto it = checkpoints.find(tag);
        if (it == checkpoints.end() || !fs::is_regular_file(it->second)) missing.push_back(tag);
    }
    if (!missing.empty()) throw MissingCheckpoints(missing);

    std::vector<MetricsRecord> table;
    for (const auto& tag : tags) {
        auto loaded = load_model(checkpoints.at(tag));
        if (loaded.config.variant != tag) {
            throw std::runtime_error("checkpoint " + checkpoints.at(tag) + " holds variant '" + loaded.config.variant +
                                     "', expected '" + tag + "'");
        }
        spdlog::info("evaluating {} ({} parameters)", tag, loaded.model->parameter_count());
        auto rows = evaluate(loaded.model, sequences, loaded.config.pdp(), snrs_db, seed,
                             loaded.config.effective_lambda(), tag);
        table.insert(table.end(), rows.begin(), rows.end());
    }
    return table;
}

}  // namespace rvjscc
