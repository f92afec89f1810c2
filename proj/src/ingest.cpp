#include "earpipe/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace earpipe {

std::vector<std::string> default_labels(Eigen::Index n)
{
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        out.push_back("ch" + std::to_string(i + 1));
    return out;
}

} // namespace earpipe

namespace earpipe::ingest {

std::int32_t decode_word(std::span<const std::uint8_t, 3> b)
{
    std::uint32_t u = (std::uint32_t{b[0]} << 16) | (std::uint32_t{b[1]} << 8) | std::uint32_t{b[2]};
    if (u & 0x800000u)
        u |= 0xFF000000u;
    return static_cast<std::int32_t>(u);
}

std::array<std::uint8_t, 3> encode_word(std::int32_t counts)
{
    const auto u = static_cast<std::uint32_t>(counts);
    return {static_cast<std::uint8_t>((u >> 16) & 0xFF), static_cast<std::uint8_t>((u >> 8) & 0xFF),
            static_cast<std::uint8_t>(u & 0xFF)};
}

double counts_to_microvolts(std::int32_t counts, const Scaling& s)
{
    if (!(s.gain > 0.0))
        throw ConfigError("amplifier gain must be positive");
    return static_cast<double>(counts) * s.vref / (s.gain * static_cast<double>(kMaxCount)) * 1e6;
}

std::array<std::uint8_t, kPacketSize> encode_packet(const RawPacket& p)
{
    std::array<std::uint8_t, kPacketSize> out{};
    out[0] = kHeader;
    out[1] = p.sample_number;
    for (int c = 0; c < kChannelsPerPacket; ++c) {
        const auto w = encode_word(p.channel_words[static_cast<std::size_t>(c)]);
        std::copy(w.begin(), w.end(), out.begin() + 2 + 3 * c);
    }
    std::copy(p.aux.begin(), p.aux.end(), out.begin() + 26);
    out[32] = static_cast<std::uint8_t>(kFooterBase | (p.footer_tag & 0x0F));
    return out;
}

std::optional<RawPacket> decode_packet(std::span<const std::uint8_t, kPacketSize> b)
{
    if (b[0] != kHeader || (b[32] & 0xF0) != kFooterBase)
        return std::nullopt;
    RawPacket p;
    p.sample_number = b[1];
    for (std::size_t c = 0; c < kChannelsPerPacket; ++c)
        p.channel_words[c] = decode_word(b.subspan(2 + 3 * c).first<3>());
    std::copy(b.begin() + 26, b.begin() + 32, p.aux.begin());
    p.footer_tag = b[32] & 0x0F;
    return p;
}

StreamParser::StreamParser(StreamOptions opts) : opts_(opts)
{
    if (!(opts_.rate > 0.0))
        throw ConfigError("sampling rate must be positive");
    if (!(opts_.scaling.gain > 0.0))
        throw ConfigError("amplifier gain must be positive");
}

void StreamParser::feed(std::span<const std::uint8_t> bytes)
{
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
    scan(false);
}

void StreamParser::scan(bool final)
{
    std::size_t pos = 0;
    const std::size_t n = buffer_.size();
    while (pos < n) {
        if (buffer_[pos] == kHeader) {
            if (pos + kPacketSize > n) {
                if (!final)
                    break;
                // truncated tail
                if (!skipping_) {
                    ++report_.resyncs;
                    skipping_ = true;
                }
                pos = n;
                break;
            }
            const std::span<const std::uint8_t, kPacketSize> candidate(buffer_.data() + pos, kPacketSize);
            if (auto p = decode_packet(candidate)) {
                accept(*p);
                skipping_ = false;
                pos += kPacketSize;
                continue;
            }
        }
        if (!skipping_) {
            ++report_.resyncs;
            skipping_ = true;
        }
        ++pos;
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
}

void StreamParser::accept(const RawPacket& p)
{
    if (last_sample_number_) {
        const auto gap = static_cast<std::uint8_t>(p.sample_number - *last_sample_number_ - 1);
        if (gap > 0) {
            report_.dropped_packets += gap;
            packet_slot_ += gap;
            if (pending_) {
                ++report_.discarded_packets;
                pending_.reset();
            }
        }
    }
    last_sample_number_ = p.sample_number;
    const std::size_t slot = packet_slot_++;

    if (!opts_.daisy) {
        emit(p, nullptr, slot);
        return;
    }
    if (!pending_) {
        pending_ = p;
        pending_slot_ = slot;
        return;
    }
    emit(*pending_, &p, pending_slot_);
    pending_.reset();
}

void StreamParser::emit(const RawPacket& lower, const RawPacket* upper, std::size_t slot)
{
    const std::size_t per_frame = opts_.daisy ? 2 : 1;
    SampleFrame f;
    f.t = static_cast<double>(slot / per_frame) / opts_.rate;
    f.counts.assign(lower.channel_words.begin(), lower.channel_words.end());
    if (upper)
        f.counts.insert(f.counts.end(), upper->channel_words.begin(), upper->channel_words.end());
    f.values.reserve(f.counts.size());
    for (auto c : f.counts)
        f.values.push_back(counts_to_microvolts(c, opts_.scaling));
    if (frames_.empty() && report_.actual_samples == 0)
        report_.first_t = f.t;
    report_.last_t = f.t;
    ++report_.actual_samples;
    frames_.push_back(std::move(f));
}

void StreamParser::finish()
{
    scan(true);
    if (pending_) {
        ++report_.discarded_packets;
        pending_.reset();
    }
    const std::size_t per_frame = opts_.daisy ? 2 : 1;
    report_.expected_samples = (packet_slot_ + per_frame - 1) / per_frame;
}

std::vector<SampleFrame> StreamParser::take_frames()
{
    return std::exchange(frames_, {});
}

ParseResult parse_stream(std::span<const std::uint8_t> bytes, const StreamOptions& opts)
{
    StreamParser parser(opts);
    parser.feed(bytes);
    parser.finish();
    return {parser.take_frames(), parser.report()};
}

std::vector<std::uint8_t> encode_frames(const std::vector<SampleFrame>& frames, bool daisy)
{
    const std::size_t width = daisy ? 2 * kChannelsPerPacket : kChannelsPerPacket;
    std::vector<std::uint8_t> out;
    out.reserve(frames.size() * kPacketSize * (daisy ? 2 : 1));
    std::uint8_t sn = 0;
    for (const auto& f : frames) {
        if (f.counts.size() != width)
            throw DataError("frame has " + std::to_string(f.counts.size()) + " channels, expected " +
                            std::to_string(width));
        for (std::size_t half = 0; half < (daisy ? 2u : 1u); ++half) {
            RawPacket p;
            p.sample_number = sn++;
            std::copy_n(f.counts.begin() + static_cast<std::ptrdiff_t>(half * kChannelsPerPacket),
                        kChannelsPerPacket, p.channel_words.begin());
            const auto bytes = encode_packet(p);
            out.insert(out.end(), bytes.begin(), bytes.end());
        }
    }
    return out;
}

Recording frames_to_recording(const std::vector<SampleFrame>& frames, double rate)
{
    Recording rec;
    rec.rate = rate;
    const Eigen::Index nch = frames.empty() ? 0 : static_cast<Eigen::Index>(frames.front().values.size());
    rec.data.resize(nch, static_cast<Eigen::Index>(frames.size()));
    for (std::size_t j = 0; j < frames.size(); ++j)
        for (Eigen::Index c = 0; c < nch; ++c)
            rec.data(c, static_cast<Eigen::Index>(j)) = frames[j].values[static_cast<std::size_t>(c)];
    rec.labels = default_labels(nch);
    rec.start_s = frames.empty() ? 0.0 : frames.front().t;
    return rec;
}

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ','))
        out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

std::optional<double> parse_double(const std::string& s)
{
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        return std::nullopt;
    return v;
}

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

} // namespace

Recording read_session_csv(const std::filesystem::path& path, std::optional<double> rate_hint)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open session file: " + path.string());

    std::optional<double> rate = rate_hint;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty())
            continue;
        if (t.front() == '#') {
            const auto eq = t.find("rate=");
            if (eq != std::string::npos && !rate_hint) {
                auto v = parse_double(trim(t.substr(eq + 5)));
                if (!v || !(*v > 0.0))
                    throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad rate comment");
                rate = *v;
            }
            continue;
        }
        if (header.empty()) {
            header = split_csv(t);
            continue;
        }
        const auto cells = split_csv(t);
        if (cells.size() != header.size())
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            auto v = parse_double(c);
            if (!v || !std::isfinite(*v))
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric value '" + c + "'");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    if (header.empty())
        throw DataError("session file has no header: " + path.string());

    const bool has_time = header.front() == "t_s";
    const std::size_t first_ch = has_time ? 1 : 0;
    Recording rec;
    rec.labels.assign(header.begin() + static_cast<std::ptrdiff_t>(first_ch), header.end());
    const auto nch = static_cast<Eigen::Index>(rec.labels.size());
    rec.data.resize(nch, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j)
        for (Eigen::Index c = 0; c < nch; ++c)
            rec.data(c, static_cast<Eigen::Index>(j)) = rows[j][first_ch + static_cast<std::size_t>(c)];

    if (!rate && has_time && rows.size() >= 2) {
        std::vector<double> dt;
        for (std::size_t j = 1; j < rows.size(); ++j)
            dt.push_back(rows[j][0] - rows[j - 1][0]);
        std::nth_element(dt.begin(), dt.begin() + static_cast<std::ptrdiff_t>(dt.size() / 2), dt.end());
        const double med = dt[dt.size() / 2];
        if (med > 0.0)
            rate = 1.0 / med;
    }
    if (!rate || !(*rate > 0.0))
        throw DataError("sampling rate unknown for " + path.string() + " (add a '#rate=' line)");
    rec.rate = *rate;
    rec.start_s = has_time && !rows.empty() ? rows.front()[0] : 0.0;
    return rec;
}

void write_session_csv(const std::filesystem::path& path, const Recording& rec)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write session file: " + path.string());
    out << "#rate=" << format_double(rec.rate) << '\n';
    out << "t_s";
    const auto labels = rec.labels.size() == static_cast<std::size_t>(rec.channels()) ? rec.labels
                                                                                       : default_labels(rec.channels());
    for (const auto& l : labels)
        out << ',' << l;
    out << '\n';
    std::string line;
    for (Eigen::Index j = 0; j < rec.samples(); ++j) {
        line = format_double(rec.start_s + static_cast<double>(j) / rec.rate);
        for (Eigen::Index c = 0; c < rec.channels(); ++c) {
            line += ',';
            line += format_double(rec.data(c, j));
        }
        line += '\n';
        out << line;
    }
}

std::vector<Event> read_events_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open events file: " + path.string());
    std::vector<Event> events;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto cells = split_csv(t);
        if (cells.size() != 3)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected condition,start_s,end_s");
        auto s = parse_double(cells[1]);
        auto e = parse_double(cells[2]);
        if (!s || !e) {
            if (events.empty() && lineno == 1)
                continue; // header row
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric event bounds");
        }
        events.push_back({cells[0], *s, *e});
    }
    return events;
}

void write_events_csv(const std::filesystem::path& path, const std::vector<Event>& events)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write events file: " + path.string());
    out << "condition,start_s,end_s\n";
    for (const auto& e : events)
        out << e.label << ',' << format_double(e.start_s) << ',' << format_double(e.end_s) << '\n';
}

std::vector<Segment> cut_segments(const Recording& rec, const std::vector<Event>& events)
{
    if (!(rec.rate > 0.0))
        throw DataError("recording has no sampling rate");
    const double span_end = rec.start_s + rec.duration();
    const auto n = rec.samples();
    const auto index_of = [&](double t) {
        const double x = std::ceil((t - rec.start_s) * rec.rate - 1e-9);
        return static_cast<Eigen::Index>(std::clamp(x, 0.0, static_cast<double>(n)));
    };

    std::vector<Segment> out;
    out.reserve(events.size());
    for (const auto& ev : events) {
        Segment seg;
        seg.condition = ev.label;
        const double eps = 0.5 / rec.rate;
        auto& rep = seg.report;
        rep.expected_samples =
            ev.end_s > ev.start_s ? static_cast<std::size_t>(std::llround((ev.end_s - ev.start_s) * rec.rate)) : 0;

        if (!(ev.end_s > ev.start_s)) {
            rep.flagged = true;
            rep.flag_reason = "empty event";
        } else if (ev.start_s < rec.start_s - eps || ev.end_s > span_end + eps) {
            rep.flagged = true;
            rep.flag_reason = "event outside recording span";
        }

        const Eigen::Index b = index_of(ev.start_s);
        const Eigen::Index e = std::max(b, index_of(ev.end_s));
        seg.rec = rec.with_data(rec.data.middleCols(b, e - b));
        seg.rec.start_s = rec.start_s + static_cast<double>(b) / rec.rate;
        seg.rec.events = {ev};
        rep.actual_samples = static_cast<std::size_t>(e - b);
        if (e > b) {
            rep.first_t = seg.rec.start_s;
            rep.last_t = rec.start_s + static_cast<double>(e - 1) / rec.rate;
        }
        if (!rep.flagged && rep.actual_samples != rep.expected_samples) {
            rep.flagged = true;
            rep.flag_reason = "sample count mismatch";
        }
        out.push_back(std::move(seg));
    }
    return out;
}

} // namespace earpipe::ingest
