// Chat window wiring: message list, free-text input, cart panel and advisory
// quick-reply buttons. The cart panel is a pure projection of the server's
// cart_summary; no cart state ever lives client-side.

import { ApiClient, ApiError, ChatResponse } from "./api.js";

export type MessageKind =
  | "normal"
  | "form-prompt"
  | "confirmation"
  | "cart-summary"
  | "refusal"
  | "user"
  | "system";

export interface ChatApp {
  root: HTMLElement;
  sendMessage(text: string): Promise<void>;
  resetSession(): void;
  sessionId(): string | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  parent: HTMLElement,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  parent.appendChild(node);
  return node;
}

export function replyKind(reply: string, response: ChatResponse, isLast: boolean): MessageKind {
  if (response.refusal) return "refusal";
  if (reply === response.cart_summary && response.cart_summary) return "cart-summary";
  if (isLast && response.awaiting.kind === "slot") return "form-prompt";
  if (isLast && response.awaiting.kind === "confirmation") return "confirmation";
  return "normal";
}

export function createChatApp(root: HTMLElement, client: ApiClient): ChatApp {
  root.classList.add("shopchat");

  const messages = el("div", "messages", root);
  const quickReplies = el("div", "quick-replies", root);
  const form = el("form", "composer", root);
  const input = el("input", "composer-input", form);
  input.type = "text";
  input.placeholder = "Type a message…";
  const sendButton = el("button", "composer-send", form);
  sendButton.type = "submit";
  sendButton.textContent = "Send";
  const resetButton = el("button", "composer-reset", form);
  resetButton.type = "button";
  resetButton.textContent = "New session";

  const cartPanel = el("aside", "cart-panel", root);
  const cartTitle = el("h2", "cart-title", cartPanel);
  cartTitle.textContent = "Your cart";
  const cartBody = el("pre", "cart-body", cartPanel);
  cartBody.textContent = "";

  let sessionId: string | null = null;
  let inFlight = false;

  function addMessage(text: string, author: "user" | "assistant" | "system", kind: MessageKind) {
    const node = el("div", `msg msg-${author} kind-${kind}`, messages);
    node.dataset.kind = kind;
    node.textContent = text;
    messages.scrollTop = messages.scrollHeight;
    return node;
  }

  function setBusy(busy: boolean) {
    inFlight = busy;
    input.disabled = busy;
    sendButton.disabled = busy;
  }

  function clearQuickReplies() {
    quickReplies.replaceChildren();
  }

  function showQuickReplies() {
    clearQuickReplies();
    for (const label of ["Yes", "No"]) {
      const button = el("button", "quick-reply", quickReplies);
      button.type = "button";
      button.textContent = label;
      // advisory only: pre-fill the box, never send or restrict free text
      button.addEventListener("click", () => {
        input.value = label.toLowerCase();
        input.focus();
      });
    }
  }

  function render(response: ChatResponse) {
    sessionId = response.session_id;
    response.replies.forEach((reply, index) => {
      const isLast = index === response.replies.length - 1;
      addMessage(reply, "assistant", replyKind(reply, response, isLast));
    });
    cartBody.textContent = response.cart_summary;
    clearQuickReplies();
    if (response.awaiting.kind === "confirmation") showQuickReplies();
  }

  function showError(text: string, retry?: () => void) {
    const node = addMessage(text, "system", "system");
    if (retry) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = "retry";
      button.textContent = "Retry";
      button.addEventListener("click", () => {
        node.remove();
        retry();
      });
      node.appendChild(button);
    }
  }

  async function sendMessage(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || inFlight) return;
    addMessage(trimmed, "user", "user");
    input.value = "";
    setBusy(true);
    try {
      // the text reaches the server verbatim; no client-side filtering
      const response = await client.chat(trimmed, sessionId);
      render(response);
    } catch (error) {
      if (error instanceof ApiError) {
        showError(`The server rejected that message: ${error.message}`);
      } else {
        showError("Network problem, message not delivered.", () => void sendMessage(trimmed));
      }
    } finally {
      setBusy(false);
    }
  }

  function resetSession() {
    sessionId = null;
    messages.replaceChildren();
    clearQuickReplies();
    cartBody.textContent = "";
    input.value = "";
    setBusy(false);
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void sendMessage(input.value);
  });
  resetButton.addEventListener("click", resetSession);

  return { root, sendMessage, resetSession, sessionId: () => sessionId };
}
