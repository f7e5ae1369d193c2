// Optional cross-stack smoke test against the real gateway. Hermetic by
// default: set SHOPCHAT_UI_BASE (e.g. http://127.0.0.1:8080) with the Python
// server running to exercise the wire contract end to end.

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";

const BASE = process.env.SHOPCHAT_UI_BASE;

describe.skipIf(!BASE)("live gateway smoke", () => {
  it("walks the purchase flow over the real wire", async () => {
    const client = new ApiClient(BASE!, (...args) => fetch(...args));
    const health = await client.health();
    expect(health.status).toBe("ok");

    let sid: string | null = null;
    const send = async (message: string) => {
      const response = await client.chat(message, sid);
      sid = response.session_id;
      return response;
    };

    await send("hi");
    await send("Ana");
    const shopping = await send("13083-852");
    expect(shopping.phase).toBe("shopping");

    const found = await send("what snacks do you have?");
    expect(found.replies.join("\n")).toContain("- ");

    const confirm = await send("add two of them");
    expect(confirm.awaiting.kind).toBe("confirmation");

    const added = await send("yes");
    expect(added.cart_summary).toMatch(/^2× /);
    expect(await client.cart(sid!)).toBe(added.cart_summary);

    const checkout = await send("that's all");
    expect(checkout.phase).toBe("checkout_form");
    await send("yes");
    const done = await send("pix");
    expect(done.phase).toBe("completed");
  });
});
