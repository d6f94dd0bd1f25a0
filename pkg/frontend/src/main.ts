/**
 * Browser entry point. The service origin defaults to same-origin and can
 * be overridden with `?api=http://host:port` when the page is served from
 * elsewhere.
 */

import { Client } from "./api.js";
import { createApp } from "./app.js";

const base = new URLSearchParams(window.location.search).get("api") ?? "";
const client = new Client(base, (url, init) => fetch(url, init));
const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
createApp(root, client);
