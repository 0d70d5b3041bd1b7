#pragma once

// Fictitious priors over the unknown parameter and generation of the
// enhanced dataset: N parameter draws, each with M conditionally i.i.d.
// observations.

#include "bce/io.hpp"
#include "bce/statmodels.hpp"

#include <optional>

namespace bce {

class FictitiousPrior {
 public:
  enum class Kind { UniformBox, Gaussian, SnrComposite };

  /// Per-dimension box; lower == upper gives a point mass.
  static FictitiousPrior uniform(Vec lower, Vec upper);
  static FictitiousPrior uniform(Eigen::Index dim, double lower, double upper);
  /// Gaussian with a PSD (possibly low-rank) covariance; optional clip box.
  static FictitiousPrior gaussian(Vec mean, Mat cov, std::optional<std::pair<Vec, Vec>> clip = std::nullopt);
  /// SNR y ~ U[snr_lo, snr_hi]; the nuisance amplitude h ~ U[amp_lo, amp_hi].
  static FictitiousPrior snr_composite(double amp_lo, double amp_hi, double snr_lo, double snr_hi);

  Kind kind() const { return kind_; }
  Eigen::Index dim() const;

  struct Draw {
    ParamVector y;
    double amplitude = 1.0;  // SNR prior only
  };
  Draw draw(Rng& rng) const;

  Json to_json() const;
  static FictitiousPrior from_json(const Json& j);

  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }

 private:
  Kind kind_ = Kind::UniformBox;
  Vec lower_, upper_;
  Vec mean_;
  Mat cov_, factor_;
  std::optional<std::pair<Vec, Vec>> clip_;
  double amp_lo_ = 1, amp_hi_ = 10, snr_lo_ = 2, snr_hi_ = 50;
};

std::vector<ParamVector> prior_sample(const FictitiousPrior& prior, long count, Rng& rng);

struct DatasetRecord {
  ParamVector y;
  std::vector<ObservationBatch> observations;
};

struct DatasetNM {
  std::vector<DatasetRecord> records;

  long n() const { return static_cast<long>(records.size()); }
  long m() const { return records.empty() ? 0 : static_cast<long>(records.front().observations.size()); }
};

/// One record: y from the prior, then M observations from p(x; y). With the
/// SNR prior the drawn amplitude is shared by the record's observations.
DatasetRecord generate_record(const FictitiousPrior& prior, const StatModel& model, long m, Rng& rng);

/// Record i uses substream i of `seed`, so the result is independent of the
/// thread count.
DatasetNM gen_dataset(const FictitiousPrior& prior, const StatModel& model, long n, long m, std::uint64_t seed);

/// On-the-fly generator: batch k is an independent (N_b, M_b) dataset drawn
/// from substream k of the seed.
class BatchStream {
 public:
  BatchStream(FictitiousPrior prior, StatModel model, long groups, long per_group, std::uint64_t seed);

  DatasetNM batch(long index) const;

  long groups() const { return groups_; }
  long per_group() const { return per_group_; }

 private:
  FictitiousPrior prior_;
  StatModel model_;
  long groups_, per_group_;
  std::uint64_t seed_;
};

Json model_to_json(const StatModel& model);
StatModel model_from_json(const Json& j);

void save_dataset(const std::filesystem::path& path, const DatasetNM& ds, const FictitiousPrior& prior,
                  const StatModel& model, std::uint64_t seed);

struct LoadedDataset {
  DatasetNM dataset;
  Json header;
};
LoadedDataset load_dataset(const std::filesystem::path& path);

}  // namespace bce
