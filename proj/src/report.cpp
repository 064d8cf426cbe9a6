#include "pdseg/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "pdseg/errors.hpp"
#include "pdseg/pgm.hpp"

namespace pdseg {

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string metrics_csv(const std::vector<CaseOutcome>& outcomes, Method method, int t_prime,
                        int ensemble_size) {
    std::vector<const CaseOutcome*> sorted;
    for (const auto& o : outcomes) sorted.push_back(&o);
    std::sort(sorted.begin(), sorted.end(),
              [](const CaseOutcome* a, const CaseOutcome* b) { return a->case_id < b->case_id; });

    const std::string prefix = "," + to_string(method) + "," + std::to_string(t_prime) + "," +
                               std::to_string(ensemble_size) + ",";
    std::ostringstream out;
    out << kMetricsHeader << '\n';
    std::vector<CaseMetrics> all;
    double nfe_sum = 0.0;
    for (const CaseOutcome* o : sorted) {
        const CaseMetrics& m = o->metrics;
        out << o->case_id << prefix << format_number(m.dice) << ',' << format_number(m.jaccard)
            << ',' << format_number(m.hd95) << ',' << format_number(m.f1) << ','
            << o->ensemble.total_nfe << '\n';
        all.push_back(m);
        nfe_sum += static_cast<double>(o->ensemble.total_nfe);
    }
    if (!all.empty()) {
        const MetricSummary s = summarize(all);
        out << "mean" << prefix << format_number(s.mean.dice) << ',' << format_number(s.mean.jaccard)
            << ',' << format_number(s.mean.hd95) << ',' << format_number(s.mean.f1) << ','
            << format_number(nfe_sum / static_cast<double>(all.size())) << '\n';
    }
    return out.str();
}

SweepRow make_sweep_row(double value, Method method, int t_prime, int ensemble_size,
                        double preseg_target, const std::vector<CaseOutcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("sweep point without cases");
    SweepRow row{value, method, t_prime, ensemble_size, preseg_target, {}, 0.0, 0.0};
    std::vector<CaseMetrics> all;
    // Sum in case-id order so the row does not depend on evaluation order.
    std::vector<const CaseOutcome*> sorted;
    for (const auto& o : outcomes) sorted.push_back(&o);
    std::sort(sorted.begin(), sorted.end(),
              [](const CaseOutcome* a, const CaseOutcome* b) { return a->case_id < b->case_id; });
    for (const CaseOutcome* o : sorted) {
        all.push_back(o->metrics);
        row.mean_uncertainty += mean_uncertainty(o->ensemble);
        row.nfe_per_case += static_cast<double>(o->ensemble.total_nfe);
    }
    row.summary = summarize(all);
    row.mean_uncertainty /= static_cast<double>(all.size());
    row.nfe_per_case /= static_cast<double>(all.size());
    return row;
}

std::string sweep_csv(const std::string& sweep, std::vector<SweepRow> rows) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const SweepRow& a, const SweepRow& b) { return a.value < b.value; });
    std::ostringstream out;
    out << kSweepHeader << '\n';
    for (const SweepRow& r : rows) {
        const MetricSummary& s = r.summary;
        out << sweep << ',' << format_number(r.value) << ',' << to_string(r.method) << ','
            << r.t_prime << ',' << r.ensemble_size << ',' << format_number(r.preseg_target) << ','
            << format_number(s.mean.dice) << ',' << format_number(s.stddev.dice) << ','
            << format_number(s.mean.jaccard) << ',' << format_number(s.stddev.jaccard) << ','
            << format_number(s.mean.hd95) << ',' << format_number(s.stddev.hd95) << ','
            << format_number(s.mean.f1) << ',' << format_number(s.stddev.f1) << ','
            << format_number(r.mean_uncertainty) << ',' << format_number(r.nfe_per_case) << '\n';
    }
    return out.str();
}

namespace {

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const Series& series) {
    if (series.x.size() != series.y.size() || series.x.empty()) {
        throw std::invalid_argument("line chart: x and y must be non-empty and equally long");
    }
    if (!series.error.empty() && series.error.size() != series.y.size()) {
        throw std::invalid_argument("line chart: one error value per point");
    }
    constexpr double W = 640, H = 420, left = 70, right = 20, top = 40, bottom = 60;
    const auto [xmin_it, xmax_it] = std::minmax_element(series.x.begin(), series.x.end());
    double xmin = *xmin_it, xmax = *xmax_it;
    double ymin = 1e300, ymax = -1e300;
    for (std::size_t i = 0; i < series.y.size(); ++i) {
        const double e = series.error.empty() ? 0.0 : series.error[i];
        ymin = std::min(ymin, series.y[i] - e);
        ymax = std::max(ymax, series.y[i] + e);
    }
    if (xmax == xmin) { xmin -= 1; xmax += 1; }
    if (ymax == ymin) { ymin -= 0.5; ymax += 0.5; }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (W - left - right); };
    auto py = [&](double y) { return H - bottom - (y - ymin) / (ymax - ymin) * (H - top - bottom); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape_xml(title) << "</text>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\""
      << H - bottom << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
      << "\" stroke=\"black\"/>\n";
    for (double x : series.x) {
        s << "<line x1=\"" << px(x) << "\" y1=\"" << H - bottom << "\" x2=\"" << px(x) << "\" y2=\""
          << H - bottom + 5 << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << px(x) << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\">"
          << format_number(x) << "</text>\n";
    }
    for (double y : {ymin, (ymin + ymax) / 2, ymax}) {
        s << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">"
          << fixed(y, 3) << "</text>\n";
    }
    s << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 15
      << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
    s << "<text transform=\"translate(18," << (top + H - bottom) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(y_label) << "</text>\n";

    s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series.x.size(); ++i) {
        s << (i ? " " : "") << px(series.x[i]) << ',' << py(series.y[i]);
    }
    s << "\"/>\n";
    for (std::size_t i = 0; i < series.x.size(); ++i) {
        if (!series.error.empty()) {
            s << "<line x1=\"" << px(series.x[i]) << "\" y1=\"" << py(series.y[i] - series.error[i])
              << "\" x2=\"" << px(series.x[i]) << "\" y2=\"" << py(series.y[i] + series.error[i])
              << "\" stroke=\"#1f77b4\"/>\n";
        }
        s << "<circle cx=\"" << px(series.x[i]) << "\" cy=\"" << py(series.y[i])
          << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

namespace {

Pgm to_pgm(const MaskGrid& g, int maxval, double scale) {
    Pgm p;
    p.width = g.width();
    p.height = g.height();
    p.maxval = maxval;
    p.samples.reserve(g.size());
    for (double v : g.values()) {
        const double s = std::clamp(std::round(v * scale), 0.0, static_cast<double>(maxval));
        p.samples.push_back(static_cast<std::uint16_t>(s));
    }
    return p;
}

}  // namespace

std::vector<std::string> export_maps(const std::filesystem::path& directory, const std::string& stem,
                                     const EnsembleResult& result) {
    const std::vector<std::pair<std::string, Pgm>> maps = {
        {stem + "_binary.pgm", to_pgm(result.binary, 255, 255.0)},
        {stem + "_mean.pgm", to_pgm(result.mean_prob, 65535, 65535.0)},
        {stem + "_uncertainty.pgm", to_pgm(result.uncertainty, 65535, 65535.0 / 0.25)},
    };
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
    std::vector<std::string> names;
    for (const auto& [name, pgm] : maps) {
        write_pgm(directory / name, pgm);
        names.push_back(name);
    }
    return names;
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << contents;
    if (!f) throw IoError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace pdseg
