"""Run reporting: verdicts, loss accounting, figures, and CSV export.

Everything here derives from the run log alone, so `report` works on a log
file long after the run that produced it. The stored-record view is
reconstructed by replaying the publish stream through the same dedup rule
the ingest stage uses; `replay` separately verifies that reconstruction
against the logged store events.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .pipeline import RunMetrics
from .store import ReportSummary, TelemetryRecord, TelemetryStore, report, report_text


@dataclass(frozen=True)
class TagVerdict:
    temperature_collected: bool
    activity_collected: bool


@dataclass
class RunReport:
    summary: ReportSummary
    verdicts: dict[int, TagVerdict]
    accounting: dict[str, int]
    conservation: list[tuple[str, bool]]

    def as_dict(self) -> dict:
        return {
            "per_tag": {
                str(tag_id): {
                    "activity_count": s.activity_count,
                    "temperature_count": s.temperature_count,
                    "first_seen_ms": s.first_seen_ms,
                    "last_seen_ms": s.last_seen_ms,
                    "temp_min_c": s.temp_min_c,
                    "temp_mean_c": s.temp_mean_c,
                    "temp_max_c": s.temp_max_c,
                    "temperature_collected": self.verdicts[tag_id].temperature_collected,
                    "activity_collected": self.verdicts[tag_id].activity_collected,
                }
                for tag_id, s in self.summary.per_tag.items()
            },
            "verdicts": {
                str(tag_id): {
                    "temperature_collected": v.temperature_collected,
                    "activity_collected": v.activity_collected,
                }
                for tag_id, v in self.verdicts.items()
            },
            "accounting": self.accounting,
            "conservation": [{"check": name, "ok": ok} for name, ok in self.conservation],
        }


def records_from_events(events: list[dict]) -> list[TelemetryRecord]:
    """Reconstruct the stored records by replaying publishes through dedup."""
    seen: set[tuple[int, int, str]] = set()
    records: list[TelemetryRecord] = []
    for ev in events:
        if ev["kind"] != "publish":
            continue
        key = (ev["tag_id"], ev["seq"], ev["type"])
        if key in seen:
            continue
        seen.add(key)
        records.append(TelemetryRecord(
            ts_ms=ev["ts_ms"], tag_id=ev["tag_id"], type=ev["type"], seq=ev["seq"],
            temp_c=ev.get("temp_c"), gateway_id=ev["gateway_id"],
            bridge_id=ev["bridge_id"]))
    return records


def metrics_from_events(events: list[dict]) -> RunMetrics:
    """Best-effort counter reconstruction; service-side reject counters that
    never reach the log (unknown tag, auth failure) read as zero."""
    m = RunMetrics()
    for ev in events:
        kind = ev["kind"]
        if kind == "packet_tx":
            m.packet_tx += 1
        elif kind == "bridge_rx":
            m.bridge_rx += 1
            m.relayed += 1
        elif kind == "relay_drop":
            m.dropped += 1
        elif kind == "publish":
            m.published += 1
        elif kind == "expire":
            m.expired += 1
        elif kind == "store":
            if ev["inserted"]:
                m.stored += 1
            else:
                m.store_duplicates += 1
    m.lost_uplink = m.packet_tx - m.bridge_rx
    m.delivered = m.published + m.expired
    m.in_flight_at_end = m.relayed - m.dropped - m.delivered
    return m


def report_run(events: list[dict], metrics: RunMetrics | None = None) -> RunReport:
    """Summarize one run log into verdicts and loss accounting."""
    if metrics is None:
        metrics = metrics_from_events(events)

    store = TelemetryStore()
    for rec in records_from_events(events):
        store.append(rec)
    summary = report(store, metrics)

    tag_ids = sorted({ev["tag_id"] for ev in events if ev["kind"] == "packet_tx"}
                     | set(summary.per_tag))
    verdicts = {
        tag_id: TagVerdict(
            temperature_collected=(tag_id in summary.per_tag
                                   and summary.per_tag[tag_id].temperature_count > 0),
            activity_collected=(tag_id in summary.per_tag
                                and summary.per_tag[tag_id].activity_count > 0),
        )
        for tag_id in tag_ids
    }

    accounting = metrics.as_dict()
    conservation = [
        ("tx = bridge_rx + lost_uplink + duplicates",
         metrics.packet_tx == metrics.bridge_rx + metrics.lost_uplink + metrics.duplicates),
        ("relayed = delivered + dropped + in_flight",
         metrics.relayed == metrics.delivered + metrics.dropped + metrics.in_flight_at_end),
        ("delivered = published + expired + rejected",
         metrics.delivered == metrics.published + metrics.expired
         + metrics.unknown_tag + metrics.auth_failures),
        ("published = stored + store_duplicates",
         metrics.published == metrics.stored + metrics.store_duplicates),
    ]
    return RunReport(summary=summary, verdicts=verdicts, accounting=accounting,
                     conservation=conservation)


def report_run_text(rep: RunReport) -> str:
    lines = [report_text(rep.summary), "", "verdicts"]
    for tag_id, v in sorted(rep.verdicts.items()):
        lines.append(f"  tag {tag_id:#010x}: temperature_collected={v.temperature_collected} "
                     f"activity_collected={v.activity_collected}")
    lines.append("loss accounting")
    for key, value in rep.accounting.items():
        lines.append(f"  {key}={value}")
    for name, ok in rep.conservation:
        lines.append(f"  [{'ok' if ok else 'VIOLATED'}] {name}")
    return "\n".join(lines)


def write_summary_csv(rep: RunReport, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tag_id", "activity_count", "temperature_count",
                         "first_seen_ms", "last_seen_ms",
                         "temp_min_c", "temp_mean_c", "temp_max_c",
                         "temperature_collected", "activity_collected"])
        for tag_id, v in sorted(rep.verdicts.items()):
            s = rep.summary.per_tag.get(tag_id)
            writer.writerow([
                tag_id,
                s.activity_count if s else 0,
                s.temperature_count if s else 0,
                s.first_seen_ms if s else "",
                s.last_seen_ms if s else "",
                s.temp_min_c if s and s.temp_min_c is not None else "",
                f"{s.temp_mean_c:.3f}" if s and s.temp_mean_c is not None else "",
                s.temp_max_c if s and s.temp_max_c is not None else "",
                v.temperature_collected,
                v.activity_collected,
            ])


def render_figures(events: list[dict], rep: RunReport, outdir: Path) -> list[Path]:
    """Write the report figures and the per-tag CSV next to each other."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    # event timeline, one lane per kind
    kinds = ["state_transition", "packet_tx", "bridge_rx", "relay_drop",
             "publish", "expire", "store"]
    fig, ax = plt.subplots(figsize=(9, 3.5))
    for lane, kind in enumerate(kinds):
        ts = [ev["t_s"] for ev in events if ev["kind"] == kind]
        if ts:
            ax.scatter(ts, [lane] * len(ts), s=6, label=kind)
    ax.set_yticks(range(len(kinds)))
    ax.set_yticklabels(kinds, fontsize=8)
    ax.set_xlabel("simulated time [s]")
    ax.set_title("pipeline event timeline")
    fig.tight_layout()
    path = outdir / "timeline.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # loss funnel
    acc = rep.accounting
    stages = ["packet_tx", "bridge_rx", "delivered", "published", "stored"]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(stages, [acc[s] for s in stages], color="#4878a8")
    ax.set_ylabel("packets")
    ax.set_title("pipeline loss accounting")
    for i, s in enumerate(stages):
        ax.text(i, acc[s], str(acc[s]), ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    path = outdir / "pipeline.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # published temperatures over time, per tag
    temp_events = [ev for ev in events if ev["kind"] == "publish" and "temp_c" in ev]
    if temp_events:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        by_tag: dict[int, list[dict]] = {}
        for ev in temp_events:
            by_tag.setdefault(ev["tag_id"], []).append(ev)
        for tag_id, evs in sorted(by_tag.items()):
            ax.plot([e["t_s"] for e in evs], [e["temp_c"] for e in evs],
                    marker="o", markersize=3, linewidth=0.8, label=f"tag {tag_id:#x}")
        ax.set_xlabel("simulated time [s]")
        ax.set_ylabel("temperature [degC]")
        ax.set_title("published temperatures")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = outdir / "temperature.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    csv_path = outdir / "summary.csv"
    write_summary_csv(rep, csv_path)
    written.append(csv_path)
    return written
