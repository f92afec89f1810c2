#pragma once

// Cyton(+Daisy) byte-stream decoding, session/event files and condition cutting.

#include "earpipe/recording.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace earpipe::ingest {

inline constexpr std::size_t kPacketSize = 33;
inline constexpr std::uint8_t kHeader = 0xA0;
inline constexpr std::uint8_t kFooterBase = 0xC0;
inline constexpr int kChannelsPerPacket = 8;
inline constexpr std::int32_t kMaxCount = (1 << 23) - 1;

struct RawPacket {
    std::uint8_t sample_number = 0;
    std::array<std::int32_t, kChannelsPerPacket> channel_words{};
    std::array<std::uint8_t, 6> aux{};
    std::uint8_t footer_tag = 0;
};

struct SampleFrame {
    double t = 0.0;
    std::vector<std::int32_t> counts;
    std::vector<double> values; ///< microvolts
};

struct IntegrityReport {
    std::size_t expected_samples = 0;
    std::size_t actual_samples = 0;
    double first_t = 0.0;
    double last_t = 0.0;
    std::size_t dropped_packets = 0;
    std::size_t resyncs = 0;
    /// Packets received but not emitted (unpaired Daisy halves).
    std::size_t discarded_packets = 0;
    bool flagged = false;
    std::string flag_reason;
};

struct Scaling {
    double vref = 4.5;
    double gain = 24.0;
};

struct StreamOptions {
    bool daisy = true;
    double rate = 125.0;
    Scaling scaling;
};

/// Two's-complement 24-bit big-endian word.
std::int32_t decode_word(std::span<const std::uint8_t, 3> bytes);
std::array<std::uint8_t, 3> encode_word(std::int32_t counts);

double counts_to_microvolts(std::int32_t counts, const Scaling& s = {});

std::array<std::uint8_t, kPacketSize> encode_packet(const RawPacket& p);
std::optional<RawPacket> decode_packet(std::span<const std::uint8_t, kPacketSize> bytes);

/// Incremental scanner. Holds at most one partial packet and one pending
/// Daisy half between feeds.
class StreamParser {
public:
    explicit StreamParser(StreamOptions opts = {});

    void feed(std::span<const std::uint8_t> bytes);
    /// Flushes the tail; an unpaired trailing packet is discarded.
    void finish();

    std::vector<SampleFrame> take_frames();
    const IntegrityReport& report() const { return report_; }

private:
    void scan(bool final);
    void accept(const RawPacket& p);
    void emit(const RawPacket& lower, const RawPacket* upper, std::size_t slot);

    StreamOptions opts_;
    std::vector<std::uint8_t> buffer_;
    std::vector<SampleFrame> frames_;
    IntegrityReport report_;
    std::optional<RawPacket> pending_;
    std::size_t pending_slot_ = 0;
    std::optional<std::uint8_t> last_sample_number_;
    std::size_t packet_slot_ = 0;
    bool skipping_ = false;
};

struct ParseResult {
    std::vector<SampleFrame> frames;
    IntegrityReport report;
};

ParseResult parse_stream(std::span<const std::uint8_t> bytes, const StreamOptions& opts = {});

/// Packs frames back into packets (two per frame in Daisy mode).
std::vector<std::uint8_t> encode_frames(const std::vector<SampleFrame>& frames, bool daisy = true);

Recording frames_to_recording(const std::vector<SampleFrame>& frames, double rate);

// Session CSV: optional "#rate=<hz>" comment, header "t_s,ch1..chN".
Recording read_session_csv(const std::filesystem::path& path, std::optional<double> rate_hint = {});
void write_session_csv(const std::filesystem::path& path, const Recording& rec);

// Events CSV: condition,start_s,end_s
std::vector<Event> read_events_csv(const std::filesystem::path& path);
void write_events_csv(const std::filesystem::path& path, const std::vector<Event>& events);

struct Segment {
    std::string condition;
    Recording rec;
    IntegrityReport report;
};

/// One segment per event, samples with start <= t < end.
std::vector<Segment> cut_segments(const Recording& rec, const std::vector<Event>& events);

} // namespace earpipe::ingest
