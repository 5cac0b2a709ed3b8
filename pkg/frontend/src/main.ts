/** Browser entry point: wire the app to the page and the service. */

import { SurveyApi } from "./api.js";
import { SurveyApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "";
const workerId = params.get("worker") ?? `worker_${Math.random().toString(36).slice(2, 10)}`;

const container = document.getElementById("app");
if (container === null) {
  throw new Error("missing #app container");
}

const app = new SurveyApp(new SurveyApi(base), container);
void app.start(workerId);
