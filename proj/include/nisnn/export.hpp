#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "nisnn/data.hpp"
#include "nisnn/model.hpp"
#include "nisnn/tensor.hpp"

namespace nisnn {

/// Everything needed to redraw the attention figure for one trial.
struct AttentionExport {
  std::string input_csv;         // channel,0..D-1
  std::string raster_csv;        // channel,timepiece,step,spike (encoder output; SNN only)
  std::string attention_csv;     // native score coordinates,raw,normalized
  std::string channel_mean_csv;  // sample,mean
  Tensor scores;                 // raw scores of the single trial, batch axis dropped
};

/// Runs one inference pass over `trial` and renders the CSV tables.
/// Normalized scores are min-max scaled over the trial to [0,1].
AttentionExport export_attention(Model& model, const Trial& trial);

/// Writes input.csv, raster.csv, attention.csv and channel_mean.csv.
void write_attention_export(const std::filesystem::path& dir, const AttentionExport& e);

/// Fraction of the input samples behind each score cell that lies inside
/// [begin, end). Cells are indexed like `scores` without the batch axis; the
/// key axis (and for global attention also the row axis) is located in time
/// on the half-resolution map the attention runs on.
std::vector<double> score_window_coverage(const NetworkSpec& spec, const Shape& score_shape, std::size_t begin,
                                          std::size_t end);

/// Coverage-weighted mean score inside the window over the mean outside it.
double window_score_ratio(const NetworkSpec& spec, const Tensor& scores, std::size_t begin, std::size_t end);

}  // namespace nisnn
