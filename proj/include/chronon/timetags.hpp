#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chronon/errors.hpp"

namespace chronon {

/// One detection record: logical detector channel and arrival time in
/// picoseconds since the stream epoch.
struct TimeTag {
    std::uint64_t time_ps = 0;
    std::uint16_t channel = 0;

    friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

/// Ordering used everywhere: time first, channel breaks ties.
inline bool tag_less(const TimeTag& a, const TimeTag& b) {
    return a.time_ps != b.time_ps ? a.time_ps < b.time_ps : a.channel < b.channel;
}

/// Immutable, globally time-sorted sequence of detection records.
/// Finalized at construction; safe to share read-only across workers.
class TagStream {
  public:
    TagStream() = default;

    /// Takes ownership of `tags`, sorts them (time, then channel) and checks
    /// that every channel id is below `channel_count`.
    TagStream(std::vector<TimeTag> tags, std::uint16_t channel_count,
              std::string label = {}, double nominal_duration_s = 0.0);

    const std::vector<TimeTag>& tags() const { return tags_; }
    std::size_t size() const { return tags_.size(); }
    bool empty() const { return tags_.empty(); }
    std::uint16_t channel_count() const { return channel_count_; }
    const std::string& label() const { return label_; }
    double nominal_duration_s() const { return nominal_duration_s_; }

    /// Number of tags on one channel (the per-channel totals of the
    /// normalized correlation).
    std::uint64_t count_in_channel(std::uint16_t channel) const;

    friend bool operator==(const TagStream&, const TagStream&) = default;

  private:
    std::vector<TimeTag> tags_;
    std::uint16_t channel_count_ = 0;
    std::string label_;
    double nominal_duration_s_ = 0.0;
};

/// What read_stream had to do to deliver a sorted stream.
struct LoadSummary {
    std::uint64_t records_read = 0;
    std::uint64_t out_of_order = 0;  // records not in file order
    bool resorted = false;
};

/// Reads a binary time-tag file (see file format below). Out-of-order
/// records are tolerated and sorted on load; the summary reports how many.
///
/// File format, all little-endian:
///   32-byte header: magic "QTT1", u16 version (=1), u16 channel_count,
///                   u64 record_count, 16 reserved bytes.
///   records, 16 bytes each: u64 time_ps, u16 channel, u16 flags (0),
///                   u32 reserved.
TagStream read_stream(const std::filesystem::path& path, LoadSummary* summary = nullptr);

/// Writes a finalized stream; read_stream(write_stream(s)) == s bit-exactly.
void write_stream(const TagStream& stream, const std::filesystem::path& path);

/// Sorted sub-stream containing exactly the tags of one channel.
/// channel_count of the result is preserved.
TagStream slice_channel(const TagStream& stream, std::uint16_t channel);

/// Sorted timestamps of one channel, as a flat array for the correlator.
std::vector<std::uint64_t> channel_times(const TagStream& stream, std::uint16_t channel);

}  // namespace chronon
