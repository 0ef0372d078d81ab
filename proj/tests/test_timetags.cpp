#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "chronon/timetags.hpp"

using namespace chronon;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("chronon_test_" + name);
}

std::vector<unsigned char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TagStream random_stream(std::size_t n, std::uint16_t channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint64_t> time(0, 1'000'000'000'000ULL);
    std::uniform_int_distribution<int> ch(0, channels - 1);
    std::vector<TimeTag> tags(n);
    for (auto& t : tags)
        t = TimeTag{time(rng), static_cast<std::uint16_t>(ch(rng))};
    return TagStream(std::move(tags), channels);
}

}  // namespace

TEST_CASE("empty stream writes a header-only 32-byte file") {
    const auto path = temp_file("empty.qtt");
    write_stream(TagStream({}, 4), path);
    CHECK(fs::file_size(path) == 32);
    LoadSummary summary;
    const TagStream back = read_stream(path, &summary);
    CHECK(back.size() == 0);
    CHECK(back.channel_count() == 4);
    CHECK(summary.records_read == 0);
    fs::remove(path);
}

TEST_CASE("single record layout is byte-exact") {
    const auto path = temp_file("one.qtt");
    write_stream(TagStream({TimeTag{12500, 2}}, 3), path);
    const auto bytes = file_bytes(path);
    REQUIRE(bytes.size() == 48);
    // header
    CHECK(bytes[0] == 'Q');
    CHECK(bytes[1] == 'T');
    CHECK(bytes[2] == 'T');
    CHECK(bytes[3] == '1');
    CHECK(bytes[4] == 1);  // version lo
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 3);  // channel_count lo
    CHECK(bytes[7] == 0);
    CHECK(bytes[8] == 1);  // record_count
    for (int i = 9; i < 16; ++i) CHECK(bytes[i] == 0);
    for (int i = 16; i < 32; ++i) CHECK(bytes[i] == 0);  // reserved
    // record: 12500 = 0x30D4 little-endian
    CHECK(bytes[32] == 0xD4);
    CHECK(bytes[33] == 0x30);
    for (int i = 34; i < 40; ++i) CHECK(bytes[i] == 0);
    CHECK(bytes[40] == 2);  // channel
    CHECK(bytes[41] == 0);
    for (int i = 42; i < 48; ++i) CHECK(bytes[i] == 0);  // flags + reserved
    fs::remove(path);
}

TEST_CASE("out-of-order records are sorted on load and reported") {
    const auto path = temp_file("unsorted.qtt");
    // Hand-craft a file with (ch0, 100) before (ch1, 50).
    std::ofstream out(path, std::ios::binary);
    const unsigned char header[32] = {'Q', 'T', 'T', '1', 1, 0, 2, 0, 2, 0};
    out.write(reinterpret_cast<const char*>(header), 32);
    auto put_record = [&](std::uint64_t t, std::uint16_t ch) {
        unsigned char rec[16] = {};
        for (int i = 0; i < 8; ++i) rec[i] = static_cast<unsigned char>(t >> (8 * i));
        rec[8] = static_cast<unsigned char>(ch & 0xff);
        rec[9] = static_cast<unsigned char>(ch >> 8);
        out.write(reinterpret_cast<const char*>(rec), 16);
    };
    put_record(100, 0);
    put_record(50, 1);
    out.close();

    LoadSummary summary;
    const TagStream s = read_stream(path, &summary);
    REQUIRE(s.size() == 2);
    CHECK(s.tags()[0] == TimeTag{50, 1});
    CHECK(s.tags()[1] == TimeTag{100, 0});
    CHECK(summary.out_of_order == 1);
    CHECK(summary.resorted);
    fs::remove(path);
}

TEST_CASE("million-record write/read round-trips bit-exactly") {
    const auto p1 = temp_file("rt1.qtt");
    const auto p2 = temp_file("rt2.qtt");
    const TagStream s = random_stream(1'000'000, 3, 99);
    write_stream(s, p1);
    const TagStream back = read_stream(p1);
    CHECK(back.tags() == s.tags());
    CHECK(back.channel_count() == s.channel_count());
    write_stream(back, p2);
    CHECK(file_bytes(p1) == file_bytes(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("malformed and truncated files raise typed errors") {
    const auto path = temp_file("bad.qtt");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE" << std::string(28, '\0');
    }
    CHECK_THROWS_AS(read_stream(path), FormatError);
    {
        std::ofstream out(path, std::ios::binary);
        const unsigned char header[32] = {'Q', 'T', 'T', '1', 1, 0, 2, 0, 2, 0};
        out.write(reinterpret_cast<const char*>(header), 32);
        out << std::string(16, '\0');  // one record, header claims two
    }
    try {
        read_stream(path);
        FAIL("expected TruncationError");
    } catch (const TruncationError& e) {
        CHECK(e.byte_offset() == 48);
    }
    CHECK_THROWS_AS(read_stream(temp_file("does_not_exist.qtt")), IoError);
    CHECK_THROWS_AS(write_stream(TagStream({}, 1), "/no/such/dir/x.qtt"), IoError);
    fs::remove(path);
}

TEST_CASE("stream construction validates channels and sorts with channel ties") {
    CHECK_THROWS_AS(TagStream({TimeTag{0, 5}}, 2), ArgumentError);
    const TagStream s({TimeTag{10, 1}, TimeTag{10, 0}, TimeTag{5, 1}}, 2);
    CHECK(s.tags()[0] == TimeTag{5, 1});
    CHECK(s.tags()[1] == TimeTag{10, 0});
    CHECK(s.tags()[2] == TimeTag{10, 1});
}

TEST_CASE("slice_channel selects exactly one channel") {
    const TagStream s({TimeTag{5, 0}, TimeTag{7, 1}, TimeTag{9, 0}}, 2);
    const TagStream only0 = slice_channel(s, 0);
    REQUIRE(only0.size() == 2);
    CHECK(only0.tags()[0] == TimeTag{5, 0});
    CHECK(only0.tags()[1] == TimeTag{9, 0});
    CHECK(only0.channel_count() == 2);

    const TagStream s2({TimeTag{5, 0}}, 2);
    CHECK(slice_channel(s2, 1).empty());
    CHECK_THROWS_AS(slice_channel(s, 2), ArgumentError);
}

TEST_CASE("channel slices partition the stream") {
    const TagStream s = random_stream(20'000, 4, 7);
    std::vector<TimeTag> merged;
    for (std::uint16_t ch = 0; ch < 4; ++ch) {
        const auto slice = slice_channel(s, ch);
        CHECK(slice.size() == s.count_in_channel(ch));
        merged.insert(merged.end(), slice.tags().begin(), slice.tags().end());
    }
    const TagStream rebuilt(std::move(merged), 4);
    CHECK(rebuilt == s);
}
