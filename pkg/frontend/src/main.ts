import { ApiClient } from "./api.js";
import { App } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";
const token = params.get("token") ?? undefined;

const app = new App(root, new ApiClient(base, fetch.bind(window), token));
void app.refresh();
