// In-test stand-in for the chat gateway: a fetch handler implementing the
// POST /api/chat, GET /api/cart/{id} and GET /api/health wire contract with
// the same conversation shape the scripted backend produces.

import type { Awaiting, ChatResponse } from "../src/api.js";

interface SessionState {
  phase: "initial_form" | "shopping" | "checkout_form" | "completed";
  slot: "name" | "zip" | "cart_confirm" | "payment_method" | null;
  name: string | null;
  cartQty: number;
  pendingQty: number | null;
}

const EMPTY = "Your cart is empty.";

function summary(state: SessionState): string {
  if (state.cartQty === 0) return EMPTY;
  const total = (state.cartQty * 8.9).toFixed(2);
  return `${state.cartQty}× Gummy Bears 250g — ${total}\nTotal: ${total}`;
}

export class FakeGateway {
  sessions = new Map<string, SessionState>();
  received: string[] = [];
  private counter = 0;

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = typeof input === "string" ? input : input.toString();
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    if (path === "/api/health") {
      return json({ status: "ok", catalog_version: 1 });
    }
    const cartMatch = path.match(/^\/api\/cart\/(.+)$/);
    if (cartMatch) {
      const state = this.sessions.get(decodeURIComponent(cartMatch[1]));
      if (!state) return json({ detail: "unknown session" }, 404);
      return json({ cart_summary: summary(state) });
    }
    if (path === "/api/chat" && init?.method === "POST") {
      const body = JSON.parse(String(init.body)) as { session_id?: string; message: string };
      if (!body.message || !body.message.trim()) {
        return json({ detail: "message must be non-empty" }, 400);
      }
      this.received.push(body.message);
      return json(this.turn(body.session_id ?? null, body.message));
    }
    return json({ detail: "not found" }, 404);
  };

  private turn(sessionId: string | null, message: string): ChatResponse {
    let sid = sessionId;
    let state = sid ? this.sessions.get(sid) : undefined;
    const replies: string[] = [];
    let refusal = false;

    if (!state) {
      sid = sid ?? `fake-${++this.counter}`;
      state = { phase: "initial_form", slot: "name", name: null, cartQty: 0, pendingQty: null };
      this.sessions.set(sid, state);
      replies.push("Welcome to Vila Market! Before we begin, what's your name?");
      return this.respond(sid, state, replies, refusal);
    }

    const text = message.trim().toLowerCase();
    if (/ignore (all )?previous instructions/.test(text)) {
      refusal = true;
      replies.push("Sorry, I can't help with that. Let's keep to your order: what would you like to buy?");
    } else if (state.phase === "initial_form" && state.slot === "name") {
      state.name = message.trim();
      state.slot = "zip";
      replies.push(`Thanks, ${state.name}! What's your delivery zip code? (e.g. 13083-852)`);
    } else if (state.phase === "initial_form" && state.slot === "zip") {
      if (!/^\d{5}-\d{3}$|^\d{5,8}$/.test(message.trim())) {
        replies.push("That doesn't look like a valid zip code. What's your delivery zip code? (e.g. 13083-852)");
      } else {
        state.phase = "shopping";
        state.slot = null;
        replies.push(`Thanks, ${state.name}! You're all set. Ask me for recommendations or tell me what to add to your cart.`);
      }
    } else if (state.phase === "shopping" && /do you have|got any|show me/.test(text)) {
      replies.push("Here's what I found:\n- Gummy Bears 250g (8.90)\n- Potato Chips 150g (9.80)");
    } else if (state.phase === "shopping" && /add (two|2) of them/.test(text)) {
      state.pendingQty = 2;
      replies.push("I found Gummy Bears 250g (8.90). Add 2 to your cart? (yes/no)");
    } else if (state.phase === "shopping" && state.pendingQty !== null && /^(yes|yep|sure)/.test(text)) {
      state.cartQty += state.pendingQty;
      state.pendingQty = null;
      replies.push("Done! Here's your updated cart:", summary(state));
    } else if (state.phase === "shopping" && state.pendingQty !== null && /^(no|nope)/.test(text)) {
      state.pendingQty = null;
      replies.push("Okay, I won't add it.");
    } else if (state.phase === "shopping" && /that'?s all|checkout/.test(text)) {
      state.phase = "checkout_form";
      state.slot = "cart_confirm";
      replies.push(`Here is your cart:\n${summary(state)}\nShall I confirm this order? (yes/no)`);
    } else if (state.phase === "checkout_form" && state.slot === "cart_confirm") {
      if (/^yes/.test(text)) {
        state.slot = "payment_method";
        replies.push("How would you like to pay? (credit, debit, cash or pix)");
      } else {
        state.phase = "shopping";
        state.slot = null;
        replies.push("No problem, your cart is kept as it is. Tell me what you'd like to change.");
      }
    } else if (state.phase === "checkout_form" && state.slot === "payment_method") {
      state.phase = "completed";
      state.slot = null;
      replies.push(`Your order is confirmed and will be paid with ${text}. Here's what you bought:\n${summary(state)}\nThank you for shopping with us!`);
    } else {
      replies.push("I can help with product recommendations and with your cart. What would you like to order today?");
    }
    return this.respond(sid!, state, replies, refusal);
  }

  private respond(sid: string, state: SessionState, replies: string[], refusal: boolean): ChatResponse {
    const awaiting: Awaiting =
      state.slot !== null
        ? { kind: "slot", prompt: replies[replies.length - 1] ?? null }
        : state.pendingQty !== null
          ? { kind: "confirmation", prompt: null }
          : { kind: "free", prompt: null };
    return {
      session_id: sid,
      replies,
      phase: state.phase,
      cart_summary: summary(state),
      awaiting,
      refusal,
    };
  }
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
