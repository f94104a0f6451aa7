// SPDX-License-Identifier: Apache-2.0
//
// ECG ingestion and dataset construction: CSV records, AAMI label mapping,
// R-peak-centred windows, per-lead z-scoring and the 80/20 split protocol.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "heartdarts/tensor.hpp"

namespace heartdarts {

enum class AamiClass : std::uint8_t { N = 0, S = 1, V = 2, F = 3, Q = 4 };
inline constexpr std::size_t kNumAamiClasses = 5;
inline constexpr std::array<AamiClass, kNumAamiClasses> kAllAamiClasses = {AamiClass::N, AamiClass::S, AamiClass::V,
                                                                           AamiClass::F, AamiClass::Q};

std::string_view class_name(AamiClass c);
/// N<-{L,N,R,e,j}, S<-{A,J,S,a}, V<-{E,V}, F<-{F}, Q<-{P,/,Q,f}.
std::optional<AamiClass> aami_from_symbol(char symbol);

enum class Split : std::uint8_t { search_train = 0, search_val = 1, test = 2 };
std::string_view split_name(Split s);
std::optional<Split> split_from_name(std::string_view name);

enum class Database : std::uint8_t { mitbih, incart, qt };

struct DatabaseSpec {
    Database db;
    std::string_view name;
    double fs;
    std::size_t pre;   // samples before the R peak
    std::size_t post;  // samples after the R peak
    std::size_t window_len() const { return pre + 1 + post; }
};

DatabaseSpec database_spec(Database db);
std::optional<Database> database_from_name(std::string_view name);

struct Annotation {
    std::size_t sample = 0;
    char symbol = 'N';
    bool operator==(const Annotation&) const = default;
};

struct EcgRecord {
    std::string record_id;
    double fs = 0.0;
    std::vector<std::string> lead_names;
    std::vector<std::vector<double>> signals;  // one per lead, equal length
    std::vector<Annotation> annotations;

    std::size_t length() const { return signals.empty() ? 0 : signals.front().size(); }
    /// Throws IngestionError on any broken invariant.
    void validate() const;
};

/// Reads `sample_index,<lead>...` and `sample_index,symbol` CSVs, keeping
/// only `lead_selection` in the given order.
EcgRecord load_record_csv(const std::string& signal_path, const std::string& annotation_path, double fs,
                          std::span<const std::string> lead_selection, std::string record_id = {});

struct Heartbeat {
    std::size_t leads = 0;
    std::vector<double> window;  // [lead][position], leads * window_len values
    AamiClass label = AamiClass::N;
    std::string record_id;
    std::uint64_t r_peak = 0;
    Split split = Split::search_train;

    std::size_t window_len() const { return leads == 0 ? 0 : window.size() / leads; }
    bool operator==(const Heartbeat&) const = default;
};

struct SegmentResult {
    std::vector<Heartbeat> beats;
    std::size_t dropped_boundary = 0;
    std::size_t skipped_unknown = 0;
};

/// Window [r - pre, r + post] inclusive for every beat with a mappable
/// symbol. Windows crossing the record boundary are dropped and counted.
SegmentResult segment_heartbeats(const EcgRecord& rec, std::size_t pre, std::size_t post);

/// Per-lead z-score with population std; constant leads become zeros.
Heartbeat normalize(Heartbeat beat);

/// Rounds window values to float precision (the on-disk precision).
void quantize_to_float(Heartbeat& beat);

struct HeartbeatDataset {
    std::size_t leads = 0;
    std::size_t window_len = 0;
    std::vector<Heartbeat> beats;

    std::vector<std::size_t> indices(Split s) const;
    std::size_t count(Split s) const;
    bool has_split(Split s) const { return count(s) > 0; }
    bool operator==(const HeartbeatDataset&) const = default;
};

/// Sorts by (record_id, r_peak), shuffles with `seed`, then assigns the
/// first floor(0.8 n) to train and the rest to test; within train, the
/// first floor(0.8 n_train) become search_train and the rest search_val.
HeartbeatDataset split_dataset(std::vector<Heartbeat> beats, std::uint64_t seed);

struct DatasetStats {
    // counts[split][class]
    std::array<std::array<std::size_t, kNumAamiClasses>, 3> counts{};
    std::array<std::size_t, kNumAamiClasses> class_totals() const;
    std::size_t total() const;
    std::string report() const;
};

DatasetStats dataset_stats(const HeartbeatDataset& ds);

std::vector<std::uint8_t> encode_dataset(const HeartbeatDataset& ds);
HeartbeatDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::string& path, const HeartbeatDataset& ds);
HeartbeatDataset load_dataset(const std::string& path);

/// Denoise every lead, segment, normalize, quantize; no splitting.
struct PreprocessSummary {
    std::size_t records = 0;
    std::size_t beats = 0;
    std::size_t dropped_boundary = 0;
    std::size_t skipped_unknown = 0;
};
std::vector<Heartbeat> preprocess_record(const EcgRecord& rec, const DatabaseSpec& spec, PreprocessSummary* summary);

template <typename T>
struct Batch {
    TensorPtr<T> x;  // [b, leads, window_len]
    std::vector<int> labels;
    std::size_t size() const { return labels.size(); }
};

template <typename T>
Batch<T> make_batch(const HeartbeatDataset& ds, std::span<const std::size_t> indices);

}  // namespace heartdarts
