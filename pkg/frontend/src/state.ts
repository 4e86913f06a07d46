/** Console view-model.
 *
 * Everything rendered derives from received /events records plus /state
 * snapshots; the console never simulates or extrapolates engine state.
 */

import { LogRecord, numField, parseRecord, unquote } from "./records.js";

export interface PlaceView {
  id: string;
  kind: string;
  lat: number;
  lon: number;
  radius: number;
  index: number;
}

export interface TimelineEvent {
  ts: number;
  kind: string;
  place: string | null;
  rationale: string | null;
}

export interface CommandEntry {
  seq: number;
  action: Record<string, unknown>;
  ok: boolean | null; // null while in flight
  info: string;
  effect: string | null; // first matching visible effect, if observed
}

export interface MetricPoint {
  ts: number;
  q: number;
  c: number;
  l: number;
  sigma: number | null;
}

export class ConsoleSession {
  connection: string = "idle";
  streamGaps = 0;
  lastId: number | null = null;

  places: PlaceView[] = [];
  polyline: Array<[number, number]> = [];
  trail: Array<{ ts: number; lat: number; lon: number }> = [];
  events: TimelineEvent[] = [];
  disturbances: Array<{ id: string; ts: number; payload: string; ack: number | null }> = [];
  hr: Array<{ ts: number; bpm: number }> = [];
  confidence: Array<{ ts: number; value: number; label: string }> = [];
  metrics: MetricPoint[] = [];
  battery = new Map<string, { drawn: number; capacity: number }>();
  model: { features: string[]; weights: number[] } | null = null;
  sessionIndex: number | null = null;
  probabilities: number[] = [];
  pureNfb = false;
  behavior: Record<string, string> | null = null;
  simTime: number | null = null;
  paused: boolean | null = null;
  encounterActive: boolean | null = null;

  commands: CommandEntry[] = [];
  private commandSeq = 0;

  /** Feed one SSE event (id + raw record line). */
  ingest(id: number | null, line: string): void {
    if (id !== null) {
      if (this.lastId !== null && id > this.lastId + 1) {
        this.streamGaps += 1;
      }
      if (this.lastId !== null && id <= this.lastId) {
        return; // duplicate replay
      }
      this.lastId = id;
    }
    this.apply(parseRecord(line));
  }

  private apply(rec: LogRecord): void {
    switch (rec.name) {
      case "place": {
        this.places.push({
          id: unquote(rec.fields.id ?? ""),
          kind: rec.fields.kind ?? "",
          lat: Number(rec.fields.lat),
          lon: Number(rec.fields.lon),
          radius: Number(rec.fields.radius),
          index: Number(rec.fields.index ?? "0"),
        });
        break;
      }
      case "polyline": {
        this.polyline = (rec.fields.pts ?? "")
          .split(";")
          .filter((p) => p.length > 0)
          .map((p) => {
            const [lat, lon] = p.split(":");
            return [Number(lat), Number(lon)] as [number, number];
          });
        break;
      }
      case "session-begin": {
        this.sessionIndex = Number(rec.fields.index);
        this.pureNfb = rec.fields.pure_nfb === "1";
        this.probabilities =
          rec.fields.probs === "na" || !rec.fields.probs
            ? []
            : rec.fields.probs.split(",").map(Number);
        this.trail = [];
        this.events = [];
        this.disturbances = [];
        this.hr = [];
        this.confidence = [];
        this.metrics = [];
        this.behavior = null;
        break;
      }
      case "msg": {
        const corrected = numField(rec, "corrected_ts");
        if (corrected === null) break;
        if (rec.fields.kind === "gps") {
          const first = (rec.fields.payload ?? "").split(";")[0] ?? "";
          const [lat, lon] = first.split(",").map(Number);
          if (Number.isFinite(lat) && Number.isFinite(lon)) {
            this.trail.push({ ts: corrected, lat, lon });
          }
        } else if (rec.fields.kind === "hr") {
          const bpm = Number((rec.fields.payload ?? "").split(";")[0]);
          if (Number.isFinite(bpm)) this.hr.push({ ts: corrected, bpm });
        }
        break;
      }
      case "event": {
        const event: TimelineEvent = {
          ts: Number(rec.fields.ts),
          kind: rec.fields.kind ?? "",
          place: rec.fields.place === "na" ? null : unquote(rec.fields.place ?? ""),
          rationale: rec.fields.rationale === "na" ? null : rec.fields.rationale ?? null,
        };
        this.events.push(event);
        this.markEffects(event);
        break;
      }
      case "disturbance": {
        this.disturbances.push({
          id: rec.fields.id ?? "",
          ts: Number(rec.fields.ts),
          payload: unquote(rec.fields.payload ?? ""),
          ack: numField(rec, "ack"),
        });
        break;
      }
      case "clf": {
        this.confidence.push({
          ts: Number(rec.fields.ts),
          value: Number(rec.fields.confidence),
          label: rec.fields.label ?? "",
        });
        break;
      }
      case "metrics": {
        this.metrics.push({
          ts: Number(rec.fields.ts),
          q: Number(rec.fields.q),
          c: Number(rec.fields.c),
          l: Number(rec.fields.l),
          sigma: numField(rec, "sigma"),
        });
        break;
      }
      case "battery": {
        this.battery.set(rec.fields.sensor ?? "", {
          drawn: Number(rec.fields.drawn_mah),
          capacity: Number(rec.fields.capacity_mah),
        });
        break;
      }
      case "model": {
        this.model = {
          features: (rec.fields.features ?? "").split(",").filter((f) => f.length > 0),
          weights: (rec.fields.weights ?? "").split(",").map(Number),
        };
        break;
      }
      case "behavior": {
        this.behavior = { ...rec.fields };
        break;
      }
      default:
        break;
    }
  }

  /** Merge a /state snapshot (engine-owned live fields only). */
  mergeSnapshot(state: Record<string, unknown>): void {
    if (typeof state.sim_time === "number") this.simTime = state.sim_time;
    if (typeof state.paused === "boolean") this.paused = state.paused;
    if (typeof state.encounter_active === "boolean") {
      this.encounterActive = state.encounter_active;
    }
    if (Array.isArray(state.probabilities)) {
      this.probabilities = state.probabilities as number[];
    }
    if (typeof state.session === "number" && state.session > 0) {
      this.sessionIndex = state.session;
    }
  }

  /** Record an issued command; resolve() once acknowledged. */
  recordCommand(action: Record<string, unknown>): CommandEntry {
    const entry: CommandEntry = {
      seq: this.commandSeq++,
      action,
      ok: null,
      info: "",
      effect: null,
    };
    this.commands.push(entry);
    return entry;
  }

  resolveCommand(entry: CommandEntry, ok: boolean, info: string): void {
    entry.ok = ok;
    entry.info = info;
  }

  /** Command -> ack -> visible effect: mark the first matching event that
   * arrives after a successful ack. */
  private markEffects(event: TimelineEvent): void {
    for (const cmd of this.commands) {
      if (cmd.ok !== true || cmd.effect !== null) continue;
      if (
        cmd.action.action === "set_probability" &&
        event.kind === "nudge" &&
        event.place === `lm${cmd.action.landmark_index}`
      ) {
        cmd.effect = `nudge at ${event.place} (t=${event.ts.toFixed(1)}s)`;
      }
      if (cmd.action.action === "schedule_disturbance" && event.kind === "noop") {
        // disturbances surface via their own records; handled below
      }
    }
  }
}
