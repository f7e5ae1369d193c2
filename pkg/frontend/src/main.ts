import { ApiClient } from "./api.js";
import { createChatApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  createChatApp(root, new ApiClient());
}
