/** Console entry point: wires the event stream, snapshot polling and the
 * steering form to the panels. Read-only until steering is explicitly
 * enabled. */

import { getState, postCommand } from "./api.js";
import {
  commandHistoryPanel,
  connectionBanner,
  mapPanel,
  metricsPanel,
  modelPanel,
  physioPanel,
  sessionPanel,
  timelinePanel,
} from "./panels.js";
import { EventStream } from "./sse.js";
import { ConsoleSession } from "./state.js";

const session = new ConsoleSession();
let stream: EventStream | null = null;
let baseUrl = "";
let renderQueued = false;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function render(): void {
  renderQueued = false;
  el("banner").innerHTML = connectionBanner(session);
  el("session").innerHTML = sessionPanel(session);
  el("map").innerHTML = mapPanel(session);
  el("timeline").innerHTML = timelinePanel(session);
  el("physio").innerHTML = physioPanel(session);
  el("metrics").innerHTML = metricsPanel(session);
  el("model").innerHTML = modelPanel(session);
  el("commands").innerHTML = commandHistoryPanel(session);
}

function scheduleRender(): void {
  if (!renderQueued) {
    renderQueued = true;
    requestAnimationFrame(render);
  }
}

function connect(): void {
  baseUrl = (el("url") as HTMLInputElement).value.replace(/\/$/, "");
  stream?.stop();
  stream = new EventStream(`${baseUrl}/events`, {
    onEvent: (event) => {
      try {
        const parsed = JSON.parse(event.data) as { i: number; line: string };
        session.ingest(parsed.i, parsed.line);
      } catch {
        // malformed frame: surface via gap counter rather than guessing
        session.streamGaps += 1;
      }
      scheduleRender();
    },
    onState: (state) => {
      session.connection = state;
      scheduleRender();
    },
  });
  void stream.start();
  window.setInterval(() => {
    void getState(baseUrl)
      .then((snapshot) => {
        session.mergeSnapshot(snapshot);
        scheduleRender();
      })
      .catch(() => undefined);
  }, 1000);
}

async function steer(action: Record<string, unknown>): Promise<void> {
  const entry = session.recordCommand(action);
  scheduleRender();
  try {
    const result = await postCommand(baseUrl, action);
    session.resolveCommand(entry, result.ok, result.info);
  } catch (err) {
    session.resolveCommand(entry, false, `engine unreachable: ${String(err)}`);
  }
  scheduleRender();
}

function wireSteering(): void {
  const enabled = el("steering-enabled") as HTMLInputElement;
  const guard = (fn: () => void) => () => {
    if (!enabled.checked) {
      const entry = session.recordCommand({ action: "(steering disabled)" });
      session.resolveCommand(entry, false, "enable steering first");
      scheduleRender();
      return;
    }
    fn();
  };
  el("cmd-probability").addEventListener(
    "click",
    guard(() => {
      void steer({
        action: "set_probability",
        landmark_index: Number((el("lm-index") as HTMLInputElement).value),
        value: Number((el("lm-value") as HTMLInputElement).value),
      });
    }),
  );
  el("cmd-disturbance").addEventListener(
    "click",
    guard(() => {
      void steer({
        action: "schedule_disturbance",
        offset_s: Number((el("dist-offset") as HTMLInputElement).value),
        payload: (el("dist-payload") as HTMLInputElement).value,
      });
    }),
  );
  el("cmd-policy").addEventListener(
    "click",
    guard(() => {
      void steer({
        action: "set_case_c_policy",
        policy: (el("policy") as HTMLSelectElement).value,
      });
    }),
  );
  el("cmd-pause").addEventListener("click", guard(() => void steer({ action: "pause" })));
  el("cmd-resume").addEventListener("click", guard(() => void steer({ action: "resume" })));
}

el("connect").addEventListener("click", connect);
wireSteering();
render();
