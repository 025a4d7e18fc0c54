// Entry point: join an existing session from ?token=... or start a new one
// with ?participant=...

import { SurveyApi } from "./api.js";
import { SurveyWizard } from "./wizard.js";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) {
    return;
  }
  const params = new URLSearchParams(window.location.search);
  const api = new SurveyApi("");
  let token = params.get("token");
  if (!token) {
    const participant = params.get("participant");
    if (!participant) {
      root.textContent = "Open this page with ?token=<session token> or ?participant=<your id>.";
      return;
    }
    const created = await api.createSession(participant);
    token = created.token;
    const url = new URL(window.location.href);
    url.searchParams.delete("participant");
    url.searchParams.set("token", token);
    window.history.replaceState(null, "", url.toString());
  }
  const wizard = new SurveyWizard({ root, api, token, storage: window.sessionStorage });
  await wizard.start();
}

void boot();
