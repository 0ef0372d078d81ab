#include "chronon/timetags.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

namespace chronon {

namespace {

constexpr char kMagic[4] = {'Q', 'T', 'T', '1'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::size_t kHeaderSize = 32;
constexpr std::size_t kRecordSize = 16;

void put_u16(unsigned char* p, std::uint16_t v) {
    p[0] = static_cast<unsigned char>(v & 0xff);
    p[1] = static_cast<unsigned char>(v >> 8);
}

void put_u32(unsigned char* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

void put_u64(unsigned char* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

TagStream::TagStream(std::vector<TimeTag> tags, std::uint16_t channel_count,
                     std::string label, double nominal_duration_s)
    : tags_(std::move(tags)),
      channel_count_(channel_count),
      label_(std::move(label)),
      nominal_duration_s_(nominal_duration_s) {
    for (const TimeTag& t : tags_) {
        if (t.channel >= channel_count_)
            throw ArgumentError("tag channel " + std::to_string(t.channel) +
                                " >= channel_count " + std::to_string(channel_count_));
    }
    if (!std::is_sorted(tags_.begin(), tags_.end(), tag_less))
        std::sort(tags_.begin(), tags_.end(), tag_less);
}

std::uint64_t TagStream::count_in_channel(std::uint16_t channel) const {
    if (channel >= channel_count_)
        throw ArgumentError("channel " + std::to_string(channel) + " out of range");
    std::uint64_t n = 0;
    for (const TimeTag& t : tags_)
        if (t.channel == channel) ++n;
    return n;
}

TagStream read_stream(const std::filesystem::path& path, LoadSummary* summary) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::array<unsigned char, kHeaderSize> header{};
    in.read(reinterpret_cast<char*>(header.data()), kHeaderSize);
    if (in.gcount() != static_cast<std::streamsize>(kHeaderSize))
        throw FormatError(path.string() + ": file shorter than the 32-byte header");
    if (std::memcmp(header.data(), kMagic, 4) != 0)
        throw FormatError(path.string() + ": bad magic, not a time-tag file");
    const std::uint16_t version = get_u16(header.data() + 4);
    if (version != kFormatVersion)
        throw FormatError(path.string() + ": unsupported format version " +
                          std::to_string(version));
    const std::uint16_t channel_count = get_u16(header.data() + 6);
    const std::uint64_t record_count = get_u64(header.data() + 8);

    std::vector<TimeTag> tags;
    tags.reserve(record_count);
    std::uint64_t out_of_order = 0;
    std::array<unsigned char, kRecordSize> rec{};
    for (std::uint64_t i = 0; i < record_count; ++i) {
        in.read(reinterpret_cast<char*>(rec.data()), kRecordSize);
        if (in.gcount() != static_cast<std::streamsize>(kRecordSize)) {
            const std::uint64_t offset = kHeaderSize + i * kRecordSize;
            throw TruncationError(path.string() + ": truncated record " +
                                      std::to_string(i) + " at byte offset " +
                                      std::to_string(offset),
                                  offset);
        }
        TimeTag t;
        t.time_ps = get_u64(rec.data());
        t.channel = get_u16(rec.data() + 8);
        if (!tags.empty() && tag_less(t, tags.back())) ++out_of_order;
        tags.push_back(t);
    }

    if (summary) {
        summary->records_read = record_count;
        summary->out_of_order = out_of_order;
        summary->resorted = out_of_order > 0;
    }
    return TagStream(std::move(tags), channel_count);
}

void write_stream(const TagStream& stream, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");

    std::array<unsigned char, kHeaderSize> header{};
    std::memcpy(header.data(), kMagic, 4);
    put_u16(header.data() + 4, kFormatVersion);
    put_u16(header.data() + 6, stream.channel_count());
    put_u64(header.data() + 8, stream.size());
    out.write(reinterpret_cast<const char*>(header.data()), kHeaderSize);

    std::array<unsigned char, kRecordSize> rec{};
    for (const TimeTag& t : stream.tags()) {
        put_u64(rec.data(), t.time_ps);
        put_u16(rec.data() + 8, t.channel);
        put_u16(rec.data() + 10, 0);  // flags
        put_u32(rec.data() + 12, 0);  // reserved
        out.write(reinterpret_cast<const char*>(rec.data()), kRecordSize);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

TagStream slice_channel(const TagStream& stream, std::uint16_t channel) {
    if (channel >= stream.channel_count())
        throw ArgumentError("slice_channel: channel " + std::to_string(channel) +
                            " >= channel_count " + std::to_string(stream.channel_count()));
    std::vector<TimeTag> tags;
    for (const TimeTag& t : stream.tags())
        if (t.channel == channel) tags.push_back(t);
    return TagStream(std::move(tags), stream.channel_count(), stream.label(),
                     stream.nominal_duration_s());
}

std::vector<std::uint64_t> channel_times(const TagStream& stream, std::uint16_t channel) {
    if (channel >= stream.channel_count())
        throw ArgumentError("channel_times: channel out of range");
    std::vector<std::uint64_t> times;
    for (const TimeTag& t : stream.tags())
        if (t.channel == channel) times.push_back(t.time_ps);
    return times;
}

}  // namespace chronon
