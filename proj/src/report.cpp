#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "curricubench/experiment.hpp"

namespace curricubench::cli {

namespace {

std::string task_abbrev(const std::string& task) {
  if (task == "moco") return "M";
  if (task == "swav") return "S";
  if (task == "relloc") return "RL";
  if (task == "rotation") return "RP";
  return task;
}

std::string task_display(const std::string& task) {
  if (task == "moco") return "MoCo v2";
  if (task == "swav") return "SwAV";
  if (task == "relloc") return "Rel-Loc";
  if (task == "rotation") return "Rotation";
  return task;
}

std::string fmt2(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << v;
  return out.str();
}

}  // namespace

std::string sequence_label(const std::vector<std::string>& sequence) {
  if (sequence.empty()) return "Scratch";
  std::string out;
  for (std::size_t i = 0; i < sequence.size(); ++i)
    out += (i ? "+" : "") + task_abbrev(sequence[i]);
  return out;
}

ReportOutcome emit_report(const std::filesystem::path& results_csv,
                          const std::map<std::string, double>& single_task_acc,
                          const std::filesystem::path& out_dir, const ReportOptions& opts) {
  ReportOutcome outcome;
  std::vector<ResultsRow> rows = read_results_csv(results_csv, &outcome.malformed_rows);
  require(!rows.empty(), Errc::Empty, "results file has no usable rows");
  std::filesystem::create_directories(out_dir);

  // Group rows by pretraining-sequence length.
  std::map<std::size_t, std::vector<const ResultsRow*>> blocks;
  for (const auto& row : rows) blocks[row.pretrain_sequence.size()].push_back(&row);

  const auto has_table = [&](const std::vector<std::string>& seq) {
    return std::all_of(seq.begin(), seq.end(),
                       [&](const std::string& t) { return single_task_acc.count(t) != 0; });
  };

  outcome.table_md = out_dir / "report.md";
  {
    std::ofstream md(outcome.table_md, std::ios::trunc);
    require(md.good(), Errc::Io, "cannot write " + outcome.table_md.string());
    md << "| Curriculum | Pretraining | Validation Acc (%) | AIL (%) |\n";
    md << "|---|---|---|---|\n";
    for (const auto& [length, block] : blocks) {
      double best_acc = -1.0, best_ail = -1.0;
      for (const auto* row : block) {
        best_acc = std::max(best_acc, row->val_balanced_acc);
        best_ail = std::max(best_ail, row->mean_ail);
      }
      for (const auto* row : block) {
        std::string curriculum_mark = "-";
        if (length >= 2 && has_table(row->pretrain_sequence))
          curriculum_mark =
              curriculum::is_curriculum_order(row->pretrain_sequence, single_task_acc)
                  ? "x"
                  : " ";
        std::string name;
        if (row->pretrain_sequence.empty()) {
          name = row->run_id;
        } else {
          for (std::size_t i = 0; i < row->pretrain_sequence.size(); ++i)
            name += (i ? " + " : "") + task_display(row->pretrain_sequence[i]);
        }
        const std::string acc = fmt2(row->val_balanced_acc);
        const std::string ail = fmt2(row->mean_ail);
        md << "| " << curriculum_mark << " | " << name << " | "
           << (row->val_balanced_acc == best_acc ? "**" + acc + "**" : acc) << " | "
           << (row->mean_ail == best_ail ? "**" + ail + "**" : ail) << " |\n";
      }
      md << "|---|---|---|---|\n";
    }
  }

  outcome.scatter_csv = out_dir / "scatter.csv";
  {
    std::ofstream sc(outcome.scatter_csv, std::ios::trunc);
    require(sc.good(), Errc::Io, "cannot write " + outcome.scatter_csv.string());
    sc << "label,acc,ail\n";
    for (const auto& row : rows)
      sc << (row.pretrain_sequence.empty() ? row.run_id
                                           : sequence_label(row.pretrain_sequence))
         << "," << row.val_balanced_acc << "," << row.mean_ail << "\n";
  }

  if (opts.svg) {
    // Baselines: rows with no pretraining sequence.
    double best_baseline_acc = std::nan(""), best_baseline_ail = std::nan("");
    for (const auto& row : rows) {
      if (!row.pretrain_sequence.empty()) continue;
      if (std::isnan(best_baseline_acc) || row.val_balanced_acc > best_baseline_acc)
        best_baseline_acc = row.val_balanced_acc;
      if (std::isnan(best_baseline_ail) || row.mean_ail > best_baseline_ail)
        best_baseline_ail = row.mean_ail;
    }
    double lo_acc = rows[0].val_balanced_acc, hi_acc = lo_acc;
    double lo_ail = rows[0].mean_ail, hi_ail = lo_ail;
    for (const auto& row : rows) {
      lo_acc = std::min(lo_acc, row.val_balanced_acc);
      hi_acc = std::max(hi_acc, row.val_balanced_acc);
      lo_ail = std::min(lo_ail, row.mean_ail);
      hi_ail = std::max(hi_ail, row.mean_ail);
    }
    const double pad_acc = std::max(1.0, 0.08 * (hi_acc - lo_acc));
    const double pad_ail = std::max(1.0, 0.08 * (hi_ail - lo_ail));
    lo_acc -= pad_acc;
    hi_acc += pad_acc;
    lo_ail -= pad_ail;
    hi_ail += pad_ail;

    const double width = 640, height = 480, margin = 56;
    const auto sx = [&](double ail) {
      return margin + (ail - lo_ail) / (hi_ail - lo_ail) * (width - 2 * margin);
    };
    const auto sy = [&](double acc) {
      return height - margin - (acc - lo_acc) / (hi_acc - lo_acc) * (height - 2 * margin);
    };

    outcome.scatter_svg = out_dir / "scatter.svg";
    std::ofstream svg(outcome.scatter_svg, std::ios::trunc);
    require(svg.good(), Errc::Io, "cannot write " + outcome.scatter_svg.string());
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
        << width - margin << "\" y2=\"" << height - margin
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
        << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 14
        << "\" text-anchor=\"middle\" font-size=\"13\">AIL (%)</text>\n";
    svg << "<text x=\"16\" y=\"" << height / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
        << height / 2 << ")\">Balanced accuracy (%)</text>\n";
    if (std::isfinite(best_baseline_acc))
      svg << "<line x1=\"" << margin << "\" y1=\"" << sy(best_baseline_acc) << "\" x2=\""
          << width - margin << "\" y2=\"" << sy(best_baseline_acc)
          << "\" stroke=\"green\" stroke-dasharray=\"6,4\"/>\n";
    if (std::isfinite(best_baseline_ail))
      svg << "<line x1=\"" << sx(best_baseline_ail) << "\" y1=\"" << margin << "\" x2=\""
          << sx(best_baseline_ail) << "\" y2=\"" << height - margin
          << "\" stroke=\"orange\" stroke-dasharray=\"6,4\"/>\n";
    for (const auto& row : rows) {
      const double x = sx(row.mean_ail), y = sy(row.val_balanced_acc);
      svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"4\" fill=\"#3366cc\"/>\n";
      svg << "<text x=\"" << x + 6 << "\" y=\"" << y - 6 << "\" font-size=\"11\">"
          << (row.pretrain_sequence.empty() ? row.run_id
                                            : sequence_label(row.pretrain_sequence))
          << "</text>\n";
    }
    svg << "</svg>\n";
  }
  return outcome;
}

}  // namespace curricubench::cli
