/** Panel renderers: pure functions from the view-model to markup strings.
 *
 * Keeping them DOM-free makes every panel testable in plain node; missing
 * data always renders an explicit placeholder, never a blank panel.
 */

import { ConsoleSession, MetricPoint } from "./state.js";

const NO_DATA = (what: string): string => `<div class="no-data">no ${what} yet</div>`;

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// ---------------------------------------------------------------- map

interface Projector {
  x: (lon: number) => number;
  y: (lat: number) => number;
}

function projector(session: ConsoleSession, width: number, height: number): Projector | null {
  const lats: number[] = [];
  const lons: number[] = [];
  for (const [lat, lon] of session.polyline) {
    lats.push(lat);
    lons.push(lon);
  }
  for (const p of session.places) {
    lats.push(p.lat);
    lons.push(p.lon);
  }
  if (lats.length < 2) return null;
  const midLat = (Math.min(...lats) + Math.max(...lats)) / 2;
  const kx = Math.cos((midLat * Math.PI) / 180);
  const lonSpan = (Math.max(...lons) - Math.min(...lons)) * kx || 1e-9;
  const latSpan = Math.max(...lats) - Math.min(...lats) || 1e-9;
  const scale = Math.min((width - 40) / lonSpan, (height - 40) / latSpan);
  const lon0 = Math.min(...lons);
  const lat1 = Math.max(...lats);
  return {
    x: (lon) => 20 + (lon - lon0) * kx * scale,
    y: (lat) => 20 + (lat1 - lat) * scale,
  };
}

/** Meters-per-degree-latitude on the simulation sphere, for radius drawing. */
const M_PER_DEG_LAT = (6371000 * Math.PI) / 180;

export function mapPanel(session: ConsoleSession, width = 420, height = 520): string {
  const proj = projector(session, width, height);
  if (!proj) return NO_DATA("route");
  const degPerPx =
    session.polyline.length >= 2
      ? Math.abs(session.polyline[session.polyline.length - 1][0] - session.polyline[0][0]) /
        Math.abs(proj.y(session.polyline[session.polyline.length - 1][0]) - proj.y(session.polyline[0][0]) || 1)
      : 1e-6;
  const pxPerMeter = 1 / (degPerPx * M_PER_DEG_LAT);

  const parts: string[] = [];
  const route = session.polyline
    .map(([lat, lon]) => `${proj.x(lon).toFixed(1)},${proj.y(lat).toFixed(1)}`)
    .join(" ");
  parts.push(`<polyline class="route" points="${route}" fill="none"/>`);
  for (const p of session.places) {
    const r = Math.max(3, p.radius * pxPerMeter);
    parts.push(
      `<circle class="place place-${p.kind}" cx="${proj.x(p.lon).toFixed(1)}" ` +
        `cy="${proj.y(p.lat).toFixed(1)}" r="${r.toFixed(1)}"/>` +
        `<text class="place-label" x="${proj.x(p.lon).toFixed(1)}" ` +
        `y="${(proj.y(p.lat) - r - 2).toFixed(1)}">${esc(p.id)}</text>`,
    );
  }
  if (session.trail.length > 0) {
    const trail = session.trail
      .map((t) => `${proj.x(t.lon).toFixed(1)},${proj.y(t.lat).toFixed(1)}`)
      .join(" ");
    parts.push(`<polyline class="trail" points="${trail}" fill="none"/>`);
    const last = session.trail[session.trail.length - 1];
    parts.push(
      `<circle class="walker" cx="${proj.x(last.lon).toFixed(1)}" ` +
        `cy="${proj.y(last.lat).toFixed(1)}" r="5"/>`,
    );
  }
  for (const e of session.events) {
    if (!e.place) continue;
    const place = session.places.find((p) => p.id === e.place);
    if (!place) continue;
    parts.push(
      `<circle class="marker marker-${e.kind}" cx="${proj.x(place.lon).toFixed(1)}" ` +
        `cy="${proj.y(place.lat).toFixed(1)}" r="3"/>`,
    );
  }
  return `<svg viewBox="0 0 ${width} ${height}" class="map">${parts.join("")}</svg>`;
}

// ---------------------------------------------------------------- timeline

export function timelinePanel(session: ConsoleSession): string {
  const rows: string[] = [];
  const merged = [
    ...session.events.map((e) => ({
      ts: e.ts,
      label: `${e.kind}${e.place ? " @ " + e.place : ""}${e.rationale ? " (" + e.rationale + ")" : ""}`,
      cls: e.kind,
    })),
    ...session.disturbances.map((d) => ({
      ts: d.ts,
      label: `disturbance ${d.id}: ${d.payload}${d.ack !== null ? ` (ack +${(d.ack - d.ts).toFixed(1)}s)` : " (no ack)"}`,
      cls: "disturbance",
    })),
  ].sort((a, b) => a.ts - b.ts);
  if (merged.length === 0) return NO_DATA("feedback events");
  for (const row of merged) {
    rows.push(
      `<li class="tl tl-${esc(row.cls)}"><span class="ts">${row.ts.toFixed(1)}s</span> ${esc(row.label)}</li>`,
    );
  }
  return `<ol class="timeline">${rows.join("")}</ol>`;
}

// ---------------------------------------------------------------- charts

function sparkline(
  points: Array<[number, number]>,
  width: number,
  height: number,
  cls: string,
): string {
  if (points.length < 2) return NO_DATA("series");
  const xs = points.map((p) => p[0]);
  const ys = points.map((p) => p[1]);
  const x0 = Math.min(...xs);
  const xSpan = Math.max(...xs) - x0 || 1;
  const y0 = Math.min(...ys);
  const ySpan = Math.max(...ys) - y0 || 1;
  const path = points
    .map(
      (p) =>
        `${(((p[0] - x0) / xSpan) * (width - 8) + 4).toFixed(1)},` +
        `${(height - 4 - ((p[1] - y0) / ySpan) * (height - 8)).toFixed(1)}`,
    )
    .join(" ");
  return (
    `<svg viewBox="0 0 ${width} ${height}" class="spark ${cls}">` +
    `<polyline points="${path}" fill="none"/>` +
    `<text class="minmax" x="4" y="10">${Math.max(...ys).toFixed(2)}</text>` +
    `<text class="minmax" x="4" y="${height - 2}">${y0.toFixed(2)}</text></svg>`
  );
}

export function physioPanel(session: ConsoleSession, width = 300, height = 60): string {
  const blocks: string[] = [];
  blocks.push("<h3>heart rate (bpm)</h3>");
  blocks.push(
    session.hr.length >= 2
      ? sparkline(session.hr.map((h) => [h.ts, h.bpm]), width, height, "hr")
      : NO_DATA("heart-rate samples"),
  );
  blocks.push("<h3>classifier confidence</h3>");
  blocks.push(
    session.confidence.length >= 2
      ? sparkline(session.confidence.map((c) => [c.ts, c.value]), width, height, "conf")
      : NO_DATA("classifier outputs"),
  );
  blocks.push("<h3>battery</h3>");
  if (session.battery.size === 0) {
    blocks.push(NO_DATA("battery readings"));
  } else {
    const rows = [...session.battery.entries()]
      .sort(([a], [b]) => a.localeCompare(b))
      .map(([sensor, b]) => {
        const pct = (100 * (1 - b.drawn / b.capacity)).toFixed(1);
        return `<div class="battery-row">${esc(sensor)}: ${pct}% left</div>`;
      });
    blocks.push(rows.join(""));
  }
  return blocks.join("");
}

export function metricsPanel(session: ConsoleSession, width = 300, height = 60): string {
  if (session.metrics.length < 2) return NO_DATA("network metrics");
  const series: Array<[string, (m: MetricPoint) => number | null]> = [
    ["modularity q", (m) => m.q],
    ["clustering c", (m) => m.c],
    ["path length l", (m) => m.l],
    ["small-world sigma", (m) => m.sigma],
  ];
  const blocks: string[] = [];
  for (const [label, pick] of series) {
    const pts = session.metrics
      .map((m) => [m.ts, pick(m)] as [number, number | null])
      .filter((p): p is [number, number] => p[1] !== null);
    blocks.push(`<h3>${label}</h3>`);
    blocks.push(pts.length >= 2 ? sparkline(pts, width, height, "metric") : NO_DATA(label));
  }
  return blocks.join("");
}

// ---------------------------------------------------------------- model

export function modelPanel(session: ConsoleSession, width = 300): string {
  if (!session.model || session.model.features.length === 0) {
    return `<div class="no-data">no model (phase 1 session)</div>`;
  }
  const maxAbs = Math.max(...session.model.weights.map(Math.abs), 1e-9);
  const rows = session.model.features.map((name, i) => {
    const w = session.model!.weights[i] ?? 0;
    const pct = Math.abs(w / maxAbs) * 100;
    const side = w >= 0 ? "pos" : "neg";
    return (
      `<div class="weight-row"><span class="feature">${esc(name)}</span>` +
      `<span class="bar bar-${side}" style="width:${pct.toFixed(1)}%"></span>` +
      `<span class="value">${w.toFixed(3)}</span></div>`
    );
  });
  return `<div class="weights" data-width="${width}">${rows.join("")}</div>`;
}

// ---------------------------------------------------------------- steering

export function commandHistoryPanel(session: ConsoleSession): string {
  if (session.commands.length === 0) return NO_DATA("commands");
  const rows = session.commands.map((c) => {
    const status = c.ok === null ? "pending" : c.ok ? "applied" : "rejected";
    const effect = c.effect ? ` -&gt; ${esc(c.effect)}` : "";
    return (
      `<li class="cmd cmd-${status}">#${c.seq} ${esc(JSON.stringify(c.action))}` +
      ` [${status}${c.info ? ": " + esc(c.info) : ""}]${effect}</li>`
    );
  });
  return `<ol class="commands">${rows.join("")}</ol>`;
}

export function connectionBanner(session: ConsoleSession): string {
  const cls = session.connection;
  const label =
    session.connection === "unreachable"
      ? "engine unreachable"
      : session.connection === "dropped"
        ? "stream dropped - reconnecting"
        : session.connection;
  const gaps = session.streamGaps > 0 ? ` (${session.streamGaps} gap(s) detected)` : "";
  const sim = session.simTime !== null ? ` | sim ${session.simTime.toFixed(1)}s` : "";
  const sess = session.sessionIndex !== null ? ` | session ${session.sessionIndex}` : "";
  const paused = session.paused ? " | PAUSED" : "";
  return `<div class="banner banner-${cls}">${label}${gaps}${sim}${sess}${paused}</div>`;
}

export function sessionPanel(session: ConsoleSession): string {
  if (session.sessionIndex === null) return NO_DATA("session");
  const probs =
    session.probabilities.length > 0
      ? session.probabilities.map((p, i) => `lm${i + 1}:${p.toFixed(2)}`).join(" ")
      : "none";
  const behavior = session.behavior
    ? `<div>deviation ${session.behavior.deviation_m} m | peak ${session.behavior.peak_speed_mps} m/s | ` +
      `steps ${session.behavior.steps} | completion ${session.behavior.completion}</div>`
    : "";
  return (
    `<div class="session">session ${session.sessionIndex}` +
    `${session.pureNfb ? " (pure NFB)" : ""} | nudge probabilities: ${probs}</div>` +
    behavior
  );
}
