/** Thin client for the ops HTTP endpoint. */

export interface CommandResult {
  ok: boolean;
  info: string;
  status: number;
}

export async function getState(
  baseUrl: string,
  fetchImpl: typeof fetch = fetch,
): Promise<Record<string, unknown>> {
  const resp = await fetchImpl(`${baseUrl}/state`);
  if (!resp.ok) throw new Error(`GET /state failed: HTTP ${resp.status}`);
  return (await resp.json()) as Record<string, unknown>;
}

export async function postCommand(
  baseUrl: string,
  action: Record<string, unknown>,
  fetchImpl: typeof fetch = fetch,
): Promise<CommandResult> {
  const resp = await fetchImpl(`${baseUrl}/command`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(action),
  });
  const body = (await resp.json()) as { ok?: boolean; info?: string; reason?: string };
  return {
    ok: body.ok === true,
    info: body.ok === true ? body.info ?? "applied" : body.reason ?? "rejected",
    status: resp.status,
  };
}
