#include "earpipe/montage.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace earpipe::montage {

std::string ElectrodeLabel::str() const
{
    return (side == Side::L ? "L" : "R") + std::to_string(index);
}

ElectrodeLabel ElectrodeLabel::parse(std::string_view text)
{
    if (text.size() < 2 || (text[0] != 'L' && text[0] != 'R'))
        throw ConfigError("not an electrode label: '" + std::string(text) + "'");
    int idx = 0;
    auto [ptr, ec] = std::from_chars(text.data() + 1, text.data() + text.size(), idx);
    if (ec != std::errc() || ptr != text.data() + text.size() || idx < 1 || idx > kElectrodesPerEar)
        throw ConfigError("not an electrode label: '" + std::string(text) + "'");
    return {text[0] == 'L' ? Side::L : Side::R, idx};
}

std::optional<int> MontageMap::channel(const ElectrodeLabel& e) const
{
    auto it = channel_of.find(e);
    if (it == channel_of.end())
        return std::nullopt;
    return it->second;
}

MontageMap default_montage(ExclusionProfile profile)
{
    MontageMap m;
    m.reference = {Side::R, 6};
    m.ground = {Side::L, 6};
    const int skip = profile == ExclusionProfile::AboveEar ? 3 : 8;
    m.excluded = {{Side::L, skip}, {Side::R, skip}};

    int next_right = 1;
    int next_left = 9;
    for (Side side : {Side::R, Side::L}) {
        for (int i = 1; i <= kElectrodesPerEar; ++i) {
            ElectrodeLabel e{side, i};
            if (e == m.reference || e == m.ground || m.excluded.contains(e))
                continue;
            m.channel_of[e] = side == Side::R ? next_right++ : next_left++;
        }
    }
    return m;
}

std::vector<std::string> validate(const MontageMap& m)
{
    std::vector<std::string> out;

    std::set<int> seen;
    bool injective = true;
    bool in_range = true;
    for (const auto& [e, ch] : m.channel_of) {
        if (!seen.insert(ch).second)
            injective = false;
        if (ch < 1 || ch > kAmplifierChannels)
            in_range = false;
    }
    if (!injective)
        out.emplace_back("injectivity");
    if (!in_range || m.channel_of.size() != static_cast<std::size_t>(kAmplifierChannels))
        out.emplace_back("channel-coverage");

    bool disjoint = !(m.reference == m.ground);
    for (const auto& e : {m.reference, m.ground})
        if (m.channel_of.contains(e) || m.excluded.contains(e))
            disjoint = false;
    for (const auto& e : m.excluded)
        if (m.channel_of.contains(e))
            disjoint = false;
    if (!disjoint)
        out.emplace_back("role-disjoint");

    const auto left = std::count_if(m.excluded.begin(), m.excluded.end(), [](auto& e) { return e.side == Side::L; });
    const auto right = static_cast<std::ptrdiff_t>(m.excluded.size()) - left;
    if (left != 1 || right != 1)
        out.emplace_back("one-excluded-per-ear");

    if (m.ear_split) {
        const bool split = std::all_of(m.channel_of.begin(), m.channel_of.end(), [](const auto& kv) {
            return kv.first.side == Side::R ? kv.second <= 8 : kv.second >= 9;
        });
        if (!split)
            out.emplace_back("ear-split");
    }
    return out;
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

} // namespace

MontageMap read_montage_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open montage file: " + path.string());
    MontageMap m;
    std::optional<ElectrodeLabel> ref, gnd;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        std::vector<std::string> cells;
        std::istringstream is(t);
        for (std::string c; std::getline(is, c, ',');)
            cells.push_back(trim(c));
        if (cells.size() == 2)
            cells.emplace_back();
        if (cells.size() != 3)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected label,role,channel");
        if (cells[0] == "label")
            continue;
        const auto e = ElectrodeLabel::parse(cells[0]);
        const auto& role = cells[1];
        const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
        if (role == "data") {
            int ch = 0;
            auto [p, ec] = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), ch);
            if (ec != std::errc() || p != cells[2].data() + cells[2].size())
                throw ConfigError(where + "data electrode needs a channel number");
            m.channel_of[e] = ch;
        } else {
            if (!cells[2].empty())
                throw ConfigError(where + "channel must be blank for role " + role);
            if (role == "reference")
                ref = e;
            else if (role == "ground")
                gnd = e;
            else if (role == "excluded")
                m.excluded.insert(e);
            else
                throw ConfigError(where + "unknown role '" + role + "'");
        }
    }
    if (!ref || !gnd)
        throw ConfigError(path.string() + ": montage needs one reference and one ground electrode");
    m.reference = *ref;
    m.ground = *gnd;
    return m;
}

void write_montage_csv(const std::filesystem::path& path, const MontageMap& m)
{
    std::ofstream out(path);
    if (!out)
        throw ConfigError("cannot write montage file: " + path.string());
    out << "label,role,channel\n";
    std::vector<std::pair<int, ElectrodeLabel>> data;
    for (const auto& [e, ch] : m.channel_of)
        data.emplace_back(ch, e);
    std::sort(data.begin(), data.end());
    for (const auto& [ch, e] : data)
        out << e.str() << ",data," << ch << '\n';
    out << m.reference.str() << ",reference,\n";
    out << m.ground.str() << ",ground,\n";
    for (const auto& e : m.excluded)
        out << e.str() << ",excluded,\n";
}

std::vector<std::string> channel_labels(const MontageMap& m)
{
    std::vector<std::string> out(static_cast<std::size_t>(kAmplifierChannels));
    for (const auto& [e, ch] : m.channel_of)
        if (ch >= 1 && ch <= kAmplifierChannels)
            out[static_cast<std::size_t>(ch - 1)] = e.str();
    return out;
}

Recording rereference_linked_mastoid(const Recording& rec, const MontageMap& m, ElectrodeLabel left,
                                     ElectrodeLabel right)
{
    const auto lc = m.channel(left);
    const auto rc = m.channel(right);
    if (!lc)
        throw ConfigError("mastoid electrode " + left.str() + " is not mapped to a channel");
    if (!rc)
        throw ConfigError("mastoid electrode " + right.str() + " is not mapped to a channel");
    if (*lc > rec.channels() || *rc > rec.channels())
        throw DataError("recording has " + std::to_string(rec.channels()) + " channels; montage needs channel " +
                        std::to_string(std::max(*lc, *rc)));

    const Eigen::RowVectorXd mastoid = 0.5 * (rec.data.row(*lc - 1) + rec.data.row(*rc - 1));
    return rec.with_data(rec.data.rowwise() - mastoid);
}

} // namespace earpipe::montage
