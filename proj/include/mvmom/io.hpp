#pragma once

#include <mvmom/moments.hpp>
#include <mvmom/params.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace mvmom::io {

/// "%.17g": round-trips every double exactly.
std::string format_exact(double x);
/// "%.4g", for human-readable summaries.
std::string format_short(double x);

// Data files: header "d=<d> views=<l> onehot=<0|1>", then one record per line
// with views separated by '|'. A dense view is space-separated decimals; a
// one-hot view is a single 0-based token id. When views differ in dimension
// the header lists them comma-separated, e.g. "d=3,4,4".
void write_batch(std::ostream& out, const SampleBatch& batch);
SampleBatch read_batch(std::istream& in);

struct IngestStats {
  Index documents = 0;
  Index skipped_short = 0;
};

/// One document per line of whitespace-separated 0-based token ids. Words
/// 1-3 become views 1-3; with `thirds`, one word is drawn from each third of
/// the document instead. Documents with fewer than three tokens are skipped.
SampleBatch ingest_corpus(std::istream& in, Index vocab, bool thirds, std::uint64_t seed,
                          IngestStats* stats = nullptr);

/// Parameters file shared by ground truth and estimates. A file may describe
/// a mixture, an HMM, or both (an HMM's three-view reduction plus its chain).
struct ModelFile {
  std::optional<MultiViewMixtureParams> mixture;
  std::optional<HmmParams> hmm;
};

void write_model(std::ostream& out, const ModelFile& model);
/// Does not validate; callers decide what they need.
ModelFile read_model(std::istream& in);

void write_moments(std::ostream& out, const MomentSet& set);
MomentSet read_moments(std::istream& in);

/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace mvmom::io
